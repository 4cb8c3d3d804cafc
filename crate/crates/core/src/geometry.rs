//! Braid points, agent waypoints, strand paths, crossings and safety margins
//! in the rectangular design region.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{BraidStep, Permutation};
use crate::Vec2;

/// Default composite-midpoint resolution for curve arclengths.
pub const DEFAULT_QUADRATURE_STEPS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("region dimensions must be positive (h={height}, l={length}, T={duration})")]
    InvalidRegion { height: f64, length: f64, duration: f64 },
    #[error("a braid needs at least 2 strands, got {0}")]
    TooFewStrands(usize),
    #[error("a braid needs at least one step")]
    NoSteps,
    #[error("expected {expected} steps, got {got}")]
    StepCountMismatch { expected: usize, got: usize },
    #[error("generator s{index} does not exist for {strands} strands")]
    StepIndexOutOfRange { index: usize, strands: usize },
    #[error("time partition must start at 0 and increase strictly")]
    InvalidTimes,
    #[error("braid point columns must all have {0} points")]
    RaggedColumns(usize),
    #[error("non-finite path derivative at p={0}")]
    NonFiniteDerivative(f64),
    #[error("paths touch at an endpoint or overlap; not a crossing")]
    DegenerateCrossing,
    #[error("intersection needs two straight or two piecewise-linear paths")]
    UnsupportedPaths,
    #[error("crossing angle {0} outside (0, pi)")]
    AngleOutOfRange(f64),
    #[error("separation must be positive, got {0}")]
    InvalidSeparation(f64),
    #[error("safety margin {margin} exceeds strand length {length}")]
    MarginExceedsStrand { margin: f64, length: f64 },
}

/// Rectangular design region of height `h`, length `ℓ`, executed in time `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRect {
    pub height: f64,
    pub length: f64,
    pub duration: f64,
}

impl RegionRect {
    pub fn new(height: f64, length: f64, duration: f64) -> Result<Self, GeometryError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(height) && ok(length) && ok(duration)) {
            return Err(GeometryError::InvalidRegion { height, length, duration });
        }
        Ok(RegionRect { height, length, duration })
    }

    pub fn diagonal(&self) -> f64 {
        self.height.hypot(self.length)
    }
}

/// The sets `P_N^q`, `q = 0..M`, of braid points plus the time partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BraidPointGrid {
    columns: Vec<Vec<Vec2>>,
    times: Vec<f64>,
}

pub fn uniform_times(steps: usize, duration: f64) -> Vec<f64> {
    let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * duration / steps as f64).collect();
    // exact endpoint regardless of rounding
    times[steps] = duration;
    times
}

fn validate_times(times: &[f64]) -> Result<(), GeometryError> {
    if times.first() != Some(&0.0)
        || times.iter().any(|t| !t.is_finite())
        || times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(GeometryError::InvalidTimes);
    }
    Ok(())
}

/// Uniform grid: column `q` holds `(qℓ/M, r·h/(N-1))` for `r = 0..N-1`,
/// with `t_i = iT/M`.
pub fn braid_point_grid(strands: usize, steps: usize, region: &RegionRect) -> Result<BraidPointGrid, GeometryError> {
    if strands < 2 {
        return Err(GeometryError::TooFewStrands(strands));
    }
    if steps == 0 {
        return Err(GeometryError::NoSteps);
    }
    let columns = (0..=steps)
        .map(|q| {
            let x = q as f64 * region.length / steps as f64;
            (0..strands)
                .map(|r| Vec2::new(x, r as f64 * region.height / (strands - 1) as f64))
                .collect()
        })
        .collect();
    Ok(BraidPointGrid { columns, times: uniform_times(steps, region.duration) })
}

impl BraidPointGrid {
    /// Explicit braid points; `columns[q][r]` is row `r` of column `q`.
    pub fn from_columns(columns: Vec<Vec<Vec2>>, times: Vec<f64>) -> Result<Self, GeometryError> {
        let strands = columns.first().map_or(0, Vec::len);
        if strands < 2 {
            return Err(GeometryError::TooFewStrands(strands));
        }
        if columns.len() < 2 {
            return Err(GeometryError::NoSteps);
        }
        if columns.iter().any(|c| c.len() != strands) {
            return Err(GeometryError::RaggedColumns(strands));
        }
        if times.len() != columns.len() {
            return Err(GeometryError::StepCountMismatch { expected: columns.len() - 1, got: times.len().saturating_sub(1) });
        }
        validate_times(&times)?;
        Ok(BraidPointGrid { columns, times })
    }

    /// Replaces the time partition (non-uniform partitions).
    pub fn with_times(mut self, times: Vec<f64>) -> Result<Self, GeometryError> {
        if times.len() != self.columns.len() {
            return Err(GeometryError::StepCountMismatch { expected: self.steps(), got: times.len().saturating_sub(1) });
        }
        validate_times(&times)?;
        self.times = times;
        Ok(self)
    }

    pub fn strands(&self) -> usize {
        self.columns[0].len()
    }

    /// Number of braid steps `M` (columns minus one).
    pub fn steps(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn point(&self, column: usize, row: usize) -> Vec2 {
        self.columns[column][row]
    }

    pub fn column(&self, column: usize) -> &[Vec2] {
        &self.columns[column]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// Braid points `ξ(i, j)` assigned to each agent at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointGrid {
    grid: BraidPointGrid,
    /// `rows[i][j]`: row index agent `j` occupies after step `i`.
    rows: Vec<Vec<usize>>,
}

/// Assigns agents to braid points by composing the steps' row swaps.
/// Agent `j` starts on row `j`.
pub fn waypoints(grid: BraidPointGrid, steps: &[BraidStep]) -> Result<WaypointGrid, GeometryError> {
    let n = grid.strands();
    if steps.len() != grid.steps() {
        return Err(GeometryError::StepCountMismatch { expected: grid.steps(), got: steps.len() });
    }
    let mut rows = Vec::with_capacity(steps.len() + 1);
    let mut current: Vec<usize> = (0..n).collect();
    rows.push(current.clone());
    for step in steps {
        if let Some(g) = step.generators().iter().find(|g| g.index() >= n) {
            return Err(GeometryError::StepIndexOutOfRange { index: g.index(), strands: n });
        }
        let perm = step.permutation(n);
        current = current.iter().map(|&r| perm.apply(r)).collect();
        rows.push(current.clone());
    }
    Ok(WaypointGrid { grid, rows })
}

impl WaypointGrid {
    pub fn grid(&self) -> &BraidPointGrid {
        &self.grid
    }

    pub fn strands(&self) -> usize {
        self.grid.strands()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    /// `ξ(i, j)` with zero-based agent index.
    pub fn point(&self, step: usize, agent: usize) -> Vec2 {
        self.grid.point(step, self.rows[step][agent])
    }

    pub fn row(&self, step: usize, agent: usize) -> usize {
        self.rows[step][agent]
    }

    pub fn agent_at_row(&self, step: usize, row: usize) -> usize {
        self.rows[step].iter().position(|&r| r == row).expect("rows form a permutation")
    }

    /// Overall start-row to end-row permutation.
    pub fn final_permutation(&self) -> Permutation {
        Permutation::from_image(self.rows[self.steps()].clone()).expect("rows form a permutation")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StrandKind {
    #[default]
    Straight,
    CityBlock,
}

impl fmt::Display for StrandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrandKind::Straight => "straight",
            StrandKind::CityBlock => "city-block",
        })
    }
}

/// A parametric planar curve on `[0, 1]`.
pub trait Curve: Send + Sync {
    fn point(&self, p: f64) -> Vec2;

    /// Derivative with respect to `p`. Defaults to central differences.
    fn velocity(&self, p: f64) -> Vec2 {
        let h = 1e-6;
        let (a, b) = ((p - h).max(0.0), (p + h).min(1.0));
        (self.point(b) - self.point(a)) / (b - a)
    }
}

impl<F> Curve for F
where
    F: Fn(f64) -> Vec2 + Send + Sync,
{
    fn point(&self, p: f64) -> Vec2 {
        self(p)
    }
}

/// A curve with an analytic derivative.
pub struct AnalyticCurve<P, V> {
    pub position: P,
    pub velocity: V,
}

impl<P, V> Curve for AnalyticCurve<P, V>
where
    P: Fn(f64) -> Vec2 + Send + Sync,
    V: Fn(f64) -> Vec2 + Send + Sync,
{
    fn point(&self, p: f64) -> Vec2 {
        (self.position)(p)
    }
    fn velocity(&self, p: f64) -> Vec2 {
        (self.velocity)(p)
    }
}

#[derive(Clone)]
enum Shape {
    /// Constant-speed polyline (straight lines have two vertices).
    Polyline { vertices: Vec<Vec2>, cumulative: Vec<f64> },
    Custom(Arc<dyn Curve>),
}

/// One agent's geometric path for one braid step.
#[derive(Clone)]
pub struct StrandPath {
    kind: Option<StrandKind>,
    shape: Shape,
    length: f64,
}

impl fmt::Debug for StrandPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StrandPath")
            .field("kind", &self.kind)
            .field("start", &self.start())
            .field("end", &self.end())
            .field("length", &self.length)
            .finish()
    }
}

fn polyline(vertices: Vec<Vec2>) -> Shape {
    let mut cumulative = Vec::with_capacity(vertices.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in vertices.windows(2) {
        acc += (w[1] - w[0]).norm();
        cumulative.push(acc);
    }
    Shape::Polyline { vertices, cumulative }
}

/// Builds a strand of the given kind between two braid points.
pub fn strand_path(a: Vec2, b: Vec2, kind: StrandKind) -> StrandPath {
    match kind {
        StrandKind::Straight => StrandPath::straight(a, b),
        StrandKind::CityBlock => StrandPath::city_block(a, b),
    }
}

impl StrandPath {
    pub fn straight(a: Vec2, b: Vec2) -> Self {
        StrandPath { kind: Some(StrandKind::Straight), shape: polyline(vec![a, b]), length: (b - a).norm() }
    }

    /// Horizontal to the midway abscissa, vertical, then horizontal again.
    pub fn city_block(a: Vec2, b: Vec2) -> Self {
        let mid = 0.5 * (a.x + b.x);
        let vertices = if a.y == b.y || a.x == b.x {
            vec![a, b]
        } else {
            vec![a, Vec2::new(mid, a.y), Vec2::new(mid, b.y), b]
        };
        let length = (b.x - a.x).abs() + (b.y - a.y).abs();
        StrandPath { kind: Some(StrandKind::CityBlock), shape: polyline(vertices), length }
    }

    /// A custom parametric curve; its length is computed by quadrature.
    pub fn custom(curve: Arc<dyn Curve>, quadrature_steps: usize) -> Result<Self, GeometryError> {
        let length = midpoint_speed_integral(&*curve, quadrature_steps, 0.0, 1.0)?;
        Ok(StrandPath { kind: None, shape: Shape::Custom(curve), length })
    }

    /// `None` for custom curves.
    pub fn kind(&self) -> Option<StrandKind> {
        self.kind
    }

    /// Arclength `Δ`.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn start(&self) -> Vec2 {
        self.point(0.0)
    }

    pub fn end(&self) -> Vec2 {
        self.point(1.0)
    }

    /// Vertices when the path is piecewise linear.
    pub fn vertices(&self) -> Option<&[Vec2]> {
        match &self.shape {
            Shape::Polyline { vertices, .. } => Some(vertices),
            Shape::Custom(_) => None,
        }
    }

    /// Unit chord direction from start to end (zero for closed paths).
    pub fn chord_direction(&self) -> Vec2 {
        let d = self.end() - self.start();
        let n = d.norm();
        if n > 0.0 {
            d / n
        } else {
            Vec2::zeros()
        }
    }

    fn locate(cumulative: &[f64], distance: f64) -> usize {
        // segment index s with cumulative[s] <= distance < cumulative[s+1]
        let last = cumulative.len() - 2;
        match cumulative.binary_search_by(|c| c.partial_cmp(&distance).unwrap()) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        }
    }

    /// `γ(p)`.
    pub fn point(&self, p: f64) -> Vec2 {
        match &self.shape {
            Shape::Polyline { vertices, cumulative } => {
                let total = *cumulative.last().unwrap();
                if total == 0.0 {
                    return vertices[0];
                }
                let p = p.clamp(0.0, 1.0);
                if p == 1.0 {
                    return *vertices.last().unwrap();
                }
                let d = p * total;
                let s = Self::locate(cumulative, d);
                let seg = cumulative[s + 1] - cumulative[s];
                let u = if seg > 0.0 { (d - cumulative[s]) / seg } else { 0.0 };
                vertices[s] + (vertices[s + 1] - vertices[s]) * u
            }
            Shape::Custom(c) => c.point(p),
        }
    }

    /// `γ̇(p)`; right-continuous at polyline corners.
    pub fn velocity(&self, p: f64) -> Vec2 {
        match &self.shape {
            Shape::Polyline { vertices, cumulative } => {
                let total = *cumulative.last().unwrap();
                if total == 0.0 {
                    return Vec2::zeros();
                }
                let s = Self::locate(cumulative, p.clamp(0.0, 1.0) * total);
                let d = vertices[s + 1] - vertices[s];
                let n = d.norm();
                if n > 0.0 {
                    d / n * total
                } else {
                    Vec2::zeros()
                }
            }
            Shape::Custom(c) => c.velocity(p),
        }
    }

    /// Parameter reached after travelling `distance` along the path.
    pub fn param_at_distance(&self, distance: f64) -> f64 {
        if self.length == 0.0 {
            return 0.0;
        }
        match &self.shape {
            Shape::Polyline { .. } => (distance / self.length).clamp(0.0, 1.0),
            Shape::Custom(c) => {
                // invert the cumulative arclength by bisection
                let target = distance.clamp(0.0, self.length);
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let s = midpoint_speed_integral(&**c, 512, 0.0, mid).unwrap_or(f64::NAN);
                    if s < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Point at arclength `distance` from the start.
    pub fn point_at_distance(&self, distance: f64) -> Vec2 {
        self.point(self.param_at_distance(distance))
    }

    /// Distance along the path of a point lying on a polyline.
    fn distance_of(&self, q: Vec2) -> Option<f64> {
        let Shape::Polyline { vertices, cumulative } = &self.shape else { return None };
        let mut best: Option<(f64, f64)> = None;
        for (s, w) in vertices.windows(2).enumerate() {
            let d = w[1] - w[0];
            let len2 = d.norm_squared();
            let u = if len2 > 0.0 { ((q - w[0]).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let off = (w[0] + d * u - q).norm();
            if best.map_or(true, |(b, _)| off < b) {
                best = Some((off, cumulative[s] + u * len2.sqrt()));
            }
        }
        best.map(|(_, d)| d)
    }
}

fn midpoint_speed_integral(curve: &dyn Curve, steps: usize, from: f64, to: f64) -> Result<f64, GeometryError> {
    let steps = steps.max(1);
    let h = (to - from) / steps as f64;
    let mut acc = 0.0;
    for i in 0..steps {
        let p = from + (i as f64 + 0.5) * h;
        let v = curve.velocity(p);
        if !(v.x.is_finite() && v.y.is_finite()) {
            return Err(GeometryError::NonFiniteDerivative(p));
        }
        acc += v.norm();
    }
    Ok(acc * h)
}

/// Composite midpoint quadrature of `‖γ̇‖` over `[0, 1]`. Exact for the
/// constant-speed straight and city-block paths.
pub fn arclength(path: &StrandPath, quadrature_steps: usize) -> Result<f64, GeometryError> {
    struct View<'a>(&'a StrandPath);
    impl Curve for View<'_> {
        fn point(&self, p: f64) -> Vec2 {
            self.0.point(p)
        }
        fn velocity(&self, p: f64) -> Vec2 {
            self.0.velocity(p)
        }
    }
    midpoint_speed_integral(&View(path), quadrature_steps, 0.0, 1.0)
}

/// Where two strands cross.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingInfo {
    /// Intersection point `s`.
    pub point: Vec2,
    /// Parameter of `s` on the first path.
    pub param_j: f64,
    /// Parameter of `s` on the second path.
    pub param_k: f64,
    /// Angle between the two chord directions, `acos(x̂_jᵀ x̂_k)`.
    pub angle: f64,
}

impl CrossingInfo {
    pub fn swapped(&self) -> CrossingInfo {
        CrossingInfo { param_j: self.param_k, param_k: self.param_j, ..*self }
    }
}

fn cross2(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn chord_angle(pj: &StrandPath, pk: &StrandPath) -> f64 {
    pj.chord_direction().dot(&pk.chord_direction()).clamp(-1.0, 1.0).acos()
}

const PARAM_EPS: f64 = 1e-12;

/// Analytic crossing of two straight strands, or a segment-pair search for
/// general polylines. A collinear overlap (as in swapping city-block paths)
/// is reported at the midpoint of the shared stretch.
pub fn intersection(pj: &StrandPath, pk: &StrandPath) -> Result<Option<CrossingInfo>, GeometryError> {
    let (Some(vj), Some(vk)) = (pj.vertices(), pk.vertices()) else {
        return Err(GeometryError::UnsupportedPaths);
    };
    if pj.length == 0.0 || pk.length == 0.0 {
        return Err(GeometryError::DegenerateCrossing);
    }
    if vj.len() == 2 && vk.len() == 2 {
        return straight_intersection(pj, pk);
    }

    // collect contact stretches measured along path j
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let Shape::Polyline { cumulative: cj, .. } = &pj.shape else { unreachable!() };
    for (s, a) in vj.windows(2).enumerate() {
        for b in vk.windows(2) {
            if let Some((u0, u1)) = segment_contact(a[0], a[1], b[0], b[1]) {
                let len = cj[s + 1] - cj[s];
                lo = lo.min(cj[s] + u0 * len);
                hi = hi.max(cj[s] + u1 * len);
            }
        }
    }
    if !lo.is_finite() {
        return Ok(None);
    }
    let mid_j = 0.5 * (lo + hi);
    let point = pj.point_at_distance(mid_j);
    let mid_k = pk.distance_of(point).expect("polyline");
    let tol = 1e-12 * (pj.length + pk.length);
    if lo <= tol || hi >= pj.length - tol || mid_k <= tol || mid_k >= pk.length - tol {
        return Err(GeometryError::DegenerateCrossing);
    }
    Ok(Some(CrossingInfo {
        point,
        param_j: mid_j / pj.length,
        param_k: mid_k / pk.length,
        angle: chord_angle(pj, pk),
    }))
}

fn straight_intersection(pj: &StrandPath, pk: &StrandPath) -> Result<Option<CrossingInfo>, GeometryError> {
    let (aj, ak) = (pj.start(), pk.start());
    let dj = pj.end() - aj;
    let dk = pk.end() - ak;
    // A = [dj, -dk], A [πj; πk] = ak - aj
    let det = -cross2(dj, dk);
    let rhs = ak - aj;
    if det.abs() <= 1e-12 * dj.norm() * dk.norm() {
        // parallel: collinear overlap is degenerate, otherwise no crossing
        if cross2(dj, rhs).abs() <= 1e-12 * dj.norm() * rhs.norm().max(1.0) {
            return match segment_contact(aj, pj.end(), ak, pk.end()) {
                Some(_) => Err(GeometryError::DegenerateCrossing),
                None => Ok(None),
            };
        }
        return Ok(None);
    }
    let pi_j = cross2(rhs, -dk) / det;
    let pi_k = cross2(dj, rhs) / det;
    let inside = |p: f64| (-PARAM_EPS..=1.0 + PARAM_EPS).contains(&p);
    if !inside(pi_j) || !inside(pi_k) {
        return Ok(None);
    }
    let interior = |p: f64| p > PARAM_EPS && p < 1.0 - PARAM_EPS;
    if !interior(pi_j) || !interior(pi_k) {
        return Err(GeometryError::DegenerateCrossing);
    }
    Ok(Some(CrossingInfo { point: aj + dj * pi_j, param_j: pi_j, param_k: pi_k, angle: chord_angle(pj, pk) }))
}

/// Parameter interval on segment `a0a1` that touches segment `b0b1`.
fn segment_contact(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> Option<(f64, f64)> {
    let da = a1 - a0;
    let db = b1 - b0;
    let scale = da.norm().max(db.norm()).max(1e-300);
    let det = cross2(da, db);
    let w = b0 - a0;
    if det.abs() > 1e-12 * scale * scale {
        let u = cross2(w, db) / det;
        let v = cross2(w, da) / det;
        let ok = |t: f64| (-1e-12..=1.0 + 1e-12).contains(&t);
        return (ok(u) && ok(v)).then(|| (u.clamp(0.0, 1.0), u.clamp(0.0, 1.0)));
    }
    if cross2(da, w).abs() > 1e-12 * scale * scale {
        return None;
    }
    let len2 = da.norm_squared();
    if len2 == 0.0 {
        return None;
    }
    let t0 = w.dot(&da) / len2;
    let t1 = (b1 - a0).dot(&da) / len2;
    let (lo, hi) = (t0.min(t1).max(0.0), t0.max(t1).min(1.0));
    (lo <= hi + 1e-12).then(|| (lo, hi.max(lo)))
}

/// How the along-path safety distance is obtained.
#[derive(Debug, Clone, Copy)]
pub enum MarginRule<'a> {
    /// `δ = δ_jk csc θ`.
    Straight,
    /// `δ = δ_jk + h / (2(N-1))`.
    CityBlock,
    /// Sampled search over two arbitrary paths.
    Custom { path_j: &'a StrandPath, path_k: &'a StrandPath, samples: usize },
}

/// Along-path half-width `δ` of the safety separation region around a
/// crossing.
///
/// The custom rule returns the smallest sampled `δ` such that whenever
/// either agent is at least `δ` (along its path) from the crossing, every
/// point of the other path is at least `δ_jk` away; the result is rounded
/// up by one sample.
pub fn safety_margin(
    cross: &CrossingInfo,
    separation: f64,
    rule: MarginRule<'_>,
    strands: usize,
    height: f64,
    strand_length: f64,
) -> Result<f64, GeometryError> {
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(GeometryError::InvalidSeparation(separation));
    }
    let margin = match rule {
        MarginRule::Straight => {
            if !(cross.angle > 0.0 && cross.angle < std::f64::consts::PI) {
                return Err(GeometryError::AngleOutOfRange(cross.angle));
            }
            separation / cross.angle.sin()
        }
        MarginRule::CityBlock => separation + height / (2.0 * (strands.max(2) - 1) as f64),
        MarginRule::Custom { path_j, path_k, samples } => custom_margin(cross, separation, path_j, path_k, samples)?,
    };
    if margin > strand_length {
        return Err(GeometryError::MarginExceedsStrand { margin, length: strand_length });
    }
    Ok(margin)
}

fn custom_margin(
    cross: &CrossingInfo,
    separation: f64,
    pj: &StrandPath,
    pk: &StrandPath,
    samples: usize,
) -> Result<f64, GeometryError> {
    let n = samples.max(8);
    let sample = |p: &StrandPath| -> Vec<(f64, Vec2)> {
        (0..=n).map(|i| {
            let d = p.length * i as f64 / n as f64;
            (d, p.point_at_distance(d))
        }).collect()
    };
    let (sj, sk) = (sample(pj), sample(pk));
    let (cj, ck) = (cross.param_j * pj.length, cross.param_k * pk.length);
    let step = pj.length.max(pk.length) / n as f64;

    // clearance of every sample to the whole other path, keyed by distance from s
    let clearance = |own: &[(f64, Vec2)], other: &[(f64, Vec2)], centre: f64| -> Vec<(f64, f64)> {
        own.iter()
            .map(|&(d, q)| {
                let c = other.iter().map(|&(_, o)| (q - o).norm()).fold(f64::INFINITY, f64::min);
                ((d - centre).abs(), c)
            })
            .collect()
    };
    let mut table = clearance(&sj, &sk, cj);
    table.extend(clearance(&sk, &sj, ck));
    // smallest e with min{clearance : offset >= e} >= separation
    let worst_beyond = |e: f64| {
        table.iter().filter(|(off, _)| *off >= e).map(|&(_, c)| c).fold(f64::INFINITY, f64::min)
    };
    let (mut lo, mut hi) = (0usize, n);
    if worst_beyond(hi as f64 * step) < separation {
        return Err(GeometryError::MarginExceedsStrand { margin: f64::INFINITY, length: pj.length.min(pk.length) });
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if worst_beyond(mid as f64 * step) >= separation {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok((lo + 1) as f64 * step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    use crate::algebra::{parse_braid_word, schedule_steps, Generator};

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn grid_endpoints_only() {
        let g = braid_point_grid(2, 1, &RegionRect::new(1.0, 2.0, 1.0).unwrap()).unwrap();
        assert_eq!(g.column(0), &[v(0.0, 0.0), v(0.0, 1.0)]);
        assert_eq!(g.column(1), &[v(2.0, 0.0), v(2.0, 1.0)]);
        assert_eq!(g.times(), &[0.0, 1.0]);
    }

    #[test]
    fn three_agent_middle_column() {
        let (h, l) = (3.0, 5.0);
        let g = braid_point_grid(3, 2, &RegionRect::new(h, l, 1.0).unwrap()).unwrap();
        assert_eq!(g.column(1), &[v(0.5 * l, 0.0), v(0.5 * l, 0.5 * h), v(0.5 * l, h)]);
    }

    #[test]
    fn long_grid_shape() {
        let g = braid_point_grid(5, 80, &RegionRect::new(4.0, 8.0, 30.0).unwrap()).unwrap();
        assert_eq!(g.steps(), 80);
        assert_eq!(g.strands(), 5);
        for q in 0..=80 {
            for r in 1..5 {
                assert_relative_eq!(g.point(q, r).y - g.point(q, r - 1).y, 1.0, epsilon = 1e-12);
            }
        }
        assert_eq!(g.times()[80], 30.0);
    }

    #[test]
    fn grid_rejects_bad_input() {
        let r = RegionRect::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(braid_point_grid(1, 3, &r), Err(GeometryError::TooFewStrands(1)));
        assert!(RegionRect::new(0.0, 1.0, 1.0).is_err());
        let g = braid_point_grid(2, 2, &r).unwrap();
        assert!(g.clone().with_times(vec![0.0, 0.7, 0.5]).is_err());
        assert!(g.with_times(vec![0.0, 0.2, 1.0]).is_ok());
    }

    #[test]
    fn single_swap_waypoints() {
        let (h, l) = (1.0, 2.0);
        let g = braid_point_grid(2, 1, &RegionRect::new(h, l, 1.0).unwrap()).unwrap();
        let steps = vec![BraidStep::new(vec![Generator::positive(1)]).unwrap()];
        let w = waypoints(g, &steps).unwrap();
        assert_eq!(w.point(1, 0), v(l, h));
        assert_eq!(w.point(1, 1), v(l, 0.0));
    }

    #[test]
    fn three_agent_figure_waypoints() {
        let g = braid_point_grid(3, 2, &RegionRect::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        let w = parse_braid_word("s2.s1", 3).unwrap();
        let steps = schedule_steps(&w, false).unwrap();
        let wp = waypoints(g, &steps).unwrap();
        // σ_2 first swaps the upper two, then σ_1 the lower two
        assert_eq!((0..3).map(|j| wp.row(1, j)).collect::<Vec<_>>(), [0, 2, 1]);
        assert_eq!((0..3).map(|j| wp.row(2, j)).collect::<Vec<_>>(), [1, 2, 0]);
        assert_eq!(wp.point(2, 2), v(1.0, 0.0));
    }

    #[test]
    fn waypoint_errors() {
        let g = braid_point_grid(3, 2, &RegionRect::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(waypoints(g.clone(), &[BraidStep::identity()]), Err(GeometryError::StepCountMismatch { .. })));
        let bad = BraidStep::new(vec![Generator::positive(3)]).unwrap();
        assert!(matches!(
            waypoints(g, &[bad, BraidStep::identity()]),
            Err(GeometryError::StepIndexOutOfRange { index: 3, strands: 3 })
        ));
    }

    #[test]
    fn strand_lengths() {
        assert_eq!(StrandPath::straight(v(0.0, 0.0), v(3.0, 4.0)).length(), 5.0);
        let (h, l, n, m) = (4.0, 2.0, 5usize, 3usize);
        let a = h / (n - 1) as f64;
        let w = l / m as f64;
        let cb = StrandPath::city_block(v(0.0, 0.0), v(w, a));
        assert_relative_eq!(cb.length(), w + a, epsilon = 1e-15);
        assert_relative_eq!(arclength(&cb, 64).unwrap(), w + a, epsilon = 1e-12);
        let st = StrandPath::straight(v(0.0, 0.0), v(w, a));
        assert_relative_eq!(st.length(), (a * a + w * w).sqrt(), epsilon = 1e-15);
        assert_eq!(StrandPath::straight(v(1.0, 1.0), v(1.0, 1.0)).length(), 0.0);
    }

    #[test]
    fn city_block_shape() {
        let cb = StrandPath::city_block(v(0.0, 0.0), v(2.0, 1.0));
        assert_eq!(cb.vertices().unwrap(), &[v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(2.0, 1.0)]);
        assert_eq!(cb.point(0.0), v(0.0, 0.0));
        assert_eq!(cb.point(1.0), v(2.0, 1.0));
        assert_relative_eq!(cb.point(0.5), v(1.0, 0.5), epsilon = 1e-15);
        // flat city-block degenerates to a straight segment
        let flat = StrandPath::city_block(v(0.0, 1.0), v(2.0, 1.0));
        assert_eq!(flat.vertices().unwrap().len(), 2);
    }

    #[test]
    fn arclength_straight_and_circle() {
        assert_relative_eq!(arclength(&StrandPath::straight(v(0.0, 0.0), v(1.0, 0.0)), 16).unwrap(), 1.0);
        let quarter = Arc::new(AnalyticCurve {
            position: |p: f64| v((FRAC_PI_2 * p).cos(), (FRAC_PI_2 * p).sin()),
            velocity: |p: f64| v(-(FRAC_PI_2 * p).sin(), (FRAC_PI_2 * p).cos()) * FRAC_PI_2,
        });
        let path = StrandPath::custom(quarter, 10_000).unwrap();
        assert!((arclength(&path, 10_000).unwrap() - FRAC_PI_2).abs() < 1e-6);
        // finite-difference fallback
        let fd = StrandPath::custom(Arc::new(|p: f64| v((FRAC_PI_2 * p).cos(), (FRAC_PI_2 * p).sin())), 10_000).unwrap();
        assert!((fd.length() - FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn arclength_rejects_nan() {
        let bad = StrandPath::custom(Arc::new(AnalyticCurve {
            position: |p: f64| v(p, 0.0),
            velocity: |_p: f64| v(f64::NAN, 0.0),
        }), 4);
        assert!(matches!(bad, Err(GeometryError::NonFiniteDerivative(_))));
    }

    #[test]
    fn symmetric_x() {
        let a = StrandPath::straight(v(0.0, 0.0), v(1.0, 1.0));
        let b = StrandPath::straight(v(0.0, 1.0), v(1.0, 0.0));
        let c = intersection(&a, &b).unwrap().unwrap();
        assert_relative_eq!(c.point, v(0.5, 0.5), epsilon = 1e-15);
        assert_relative_eq!(c.param_j, 0.5);
        assert_relative_eq!(c.param_k, 0.5);
        assert_relative_eq!(c.angle, FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn parallel_and_degenerate() {
        let a = StrandPath::straight(v(0.0, 0.0), v(1.0, 0.0));
        let b = StrandPath::straight(v(0.0, 1.0), v(1.0, 1.0));
        assert_eq!(intersection(&a, &b), Ok(None));
        let c = StrandPath::straight(v(0.0, 0.0), v(1.0, 1.0));
        assert_eq!(intersection(&a, &c), Err(GeometryError::DegenerateCrossing));
        let far = StrandPath::straight(v(5.0, 0.0), v(6.0, 3.0));
        assert_eq!(intersection(&c, &far), Ok(None));
    }

    #[test]
    fn skewed_x() {
        let a = StrandPath::straight(v(0.0, 0.0), v(2.0, 1.0));
        let b = StrandPath::straight(v(0.0, 1.0), v(2.0, 0.0));
        let c = intersection(&a, &b).unwrap().unwrap();
        assert_relative_eq!(c.point, v(1.0, 0.5), epsilon = 1e-15);
        assert_relative_eq!(c.param_j, 0.5);
        assert_relative_eq!(c.angle, (3.0f64 / 5.0).acos(), epsilon = 1e-15);
    }

    #[test]
    fn city_block_crossing() {
        let a = StrandPath::city_block(v(0.0, 0.0), v(2.0, 1.0));
        let b = StrandPath::city_block(v(0.0, 1.0), v(2.0, 0.0));
        let c = intersection(&a, &b).unwrap().unwrap();
        assert_relative_eq!(c.point, v(1.0, 0.5), epsilon = 1e-15);
        assert_relative_eq!(c.param_j, 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.param_k, 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.angle, (3.0f64 / 5.0).acos(), epsilon = 1e-15);
    }

    #[test]
    fn margins() {
        let x = |angle| CrossingInfo { point: v(0.0, 0.0), param_j: 0.5, param_k: 0.5, angle };
        assert_relative_eq!(safety_margin(&x(FRAC_PI_2), 0.2, MarginRule::Straight, 2, 1.0, 1.0).unwrap(), 0.2);
        assert_relative_eq!(safety_margin(&x(FRAC_PI_6), 0.1, MarginRule::Straight, 2, 1.0, 1.0).unwrap(), 0.2, epsilon = 1e-15);
        assert_relative_eq!(safety_margin(&x(1.0), 0.1, MarginRule::CityBlock, 5, 4.0, 10.0).unwrap(), 0.6);
        assert!(matches!(
            safety_margin(&x(FRAC_PI_6), 0.1, MarginRule::Straight, 2, 1.0, 0.1),
            Err(GeometryError::MarginExceedsStrand { .. })
        ));
        assert!(safety_margin(&x(PI), 0.1, MarginRule::Straight, 2, 1.0, 1.0).is_err());
        assert!(safety_margin(&x(1.0), 0.0, MarginRule::Straight, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn custom_margin_agrees_with_closed_forms() {
        let a = StrandPath::straight(v(0.0, 0.0), v(2.0, 1.0));
        let b = StrandPath::straight(v(0.0, 1.0), v(2.0, 0.0));
        let c = intersection(&a, &b).unwrap().unwrap();
        let exact = safety_margin(&c, 0.1, MarginRule::Straight, 2, 1.0, a.length()).unwrap();
        let samples = 2000;
        let rule = MarginRule::Custom { path_j: &a, path_k: &b, samples };
        let sampled = safety_margin(&c, 0.1, rule, 2, 1.0, a.length()).unwrap();
        let spacing = a.length() / samples as f64;
        assert!(sampled >= exact - 1e-12 && sampled <= exact + 2.0 * spacing, "{sampled} vs {exact}");

        let a = StrandPath::city_block(v(0.0, 0.0), v(2.0, 1.0));
        let b = StrandPath::city_block(v(0.0, 1.0), v(2.0, 0.0));
        let c = intersection(&a, &b).unwrap().unwrap();
        let exact = safety_margin(&c, 0.1, MarginRule::CityBlock, 2, 1.0, a.length()).unwrap();
        let rule = MarginRule::Custom { path_j: &a, path_k: &b, samples };
        let sampled = safety_margin(&c, 0.1, rule, 2, 1.0, a.length()).unwrap();
        let spacing = a.length() / samples as f64;
        assert!(sampled >= exact - 1e-12 && sampled <= exact + 2.0 * spacing, "{sampled} vs {exact}");
    }
}
