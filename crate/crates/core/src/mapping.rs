//! Projective maps from rectangular design cells to curved-region
//! quadrilaterals, and the metric quantities they induce.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::Role;
use crate::geometry::{braid_point_grid, BraidPointGrid, GeometryError, RegionRect, StrandPath};
use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("corner configuration is degenerate")]
    Degenerate,
    #[error("point ({0}, {1}) maps to infinity")]
    PointAtInfinity(f64, f64),
    #[error("cell (step {step}, row {row}) is not a convex quadrilateral")]
    NonConvex { step: usize, row: usize },
    #[error("invalid centerline: {0}")]
    InvalidCenterline(String),
    #[error("non-finite metric speed at p={0}")]
    MetricBlowup(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Plane projective transform, normalized so the bottom-right entry is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
}

const W_EPS: f64 = 1e-12;

fn normalized(m: Matrix3<f64>) -> Matrix3<f64> {
    let s = m[(2, 2)];
    if s.abs() > W_EPS * m.abs().max() {
        m / s
    } else {
        m
    }
}

/// Direct linear transform through four correspondences, ordered
/// bottom-left, bottom-right, top-right, top-left.
pub fn fit_homography(rect: &[Vec2; 4], quad: &[Vec2; 4]) -> Result<Homography, MappingError> {
    for pts in [rect, quad] {
        for a in 0..4 {
            for b in a + 1..4 {
                for c in b + 1..4 {
                    let area = (pts[b] - pts[a]).perp(&(pts[c] - pts[a]));
                    let scale = (pts[b] - pts[a]).norm() * (pts[c] - pts[a]).norm();
                    if !(area.abs() > 1e-12 * scale) {
                        return Err(MappingError::Degenerate);
                    }
                }
            }
        }
    }
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (n, (p, q)) in rect.iter().zip(quad).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r = 2 * n;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b).ok_or(MappingError::Degenerate)?;
    let m = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    if !(m.determinant().abs() > 1e-14) || m.iter().any(|v| !v.is_finite()) {
        return Err(MappingError::Degenerate);
    }
    Ok(Homography { matrix: m })
}

impl Homography {
    pub fn identity() -> Self {
        Homography { matrix: Matrix3::identity() }
    }

    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self, MappingError> {
        if !(matrix.determinant().abs() > 1e-14) {
            return Err(MappingError::Degenerate);
        }
        Ok(Homography { matrix: normalized(matrix) })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> Homography {
        let inv = self.matrix.try_inverse().expect("homographies are nonsingular");
        Homography { matrix: normalized(inv) }
    }

    fn homogeneous(&self, p: Vec2) -> Result<(Vec2, f64), MappingError> {
        let m = &self.matrix;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        if !(w.abs() > W_EPS) {
            return Err(MappingError::PointAtInfinity(p.x, p.y));
        }
        let num = Vec2::new(m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)], m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]);
        Ok((num, w))
    }

    pub fn map_point(&self, p: Vec2) -> Result<Vec2, MappingError> {
        let (num, w) = self.homogeneous(p)?;
        Ok(num / w)
    }

    pub fn inverse_map_point(&self, q: Vec2) -> Result<Vec2, MappingError> {
        self.inverse().map_point(q)
    }

    /// Derivative of the perspective-divided map at `p`.
    pub fn jacobian(&self, p: Vec2) -> Result<Matrix2<f64>, MappingError> {
        let (num, w) = self.homogeneous(p)?;
        let m = &self.matrix;
        let lin = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let proj = nalgebra::RowVector2::new(m[(2, 0)], m[(2, 1)]);
        Ok((lin * w - num * proj) / (w * w))
    }
}

/// A design-space rectangle cell and the quadrilateral it maps onto.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCell {
    rect: [Vec2; 4],
    quad: [Vec2; 4],
    homography: Homography,
}

/// Strictly convex with consistent orientation.
pub fn is_convex(corners: &[Vec2; 4]) -> bool {
    let turns: Vec<f64> = (0..4)
        .map(|i| {
            let a = corners[i];
            let b = corners[(i + 1) % 4];
            let c = corners[(i + 2) % 4];
            (b - a).perp(&(c - b))
        })
        .collect();
    turns.iter().all(|&t| t > 0.0) || turns.iter().all(|&t| t < 0.0)
}

impl QuadCell {
    pub fn new(rect: [Vec2; 4], quad: [Vec2; 4]) -> Result<Self, MappingError> {
        if !is_convex(&quad) {
            return Err(MappingError::NonConvex { step: 0, row: 0 });
        }
        let homography = fit_homography(&rect, &quad)?;
        Ok(QuadCell { rect, quad, homography })
    }

    pub fn rect(&self) -> &[Vec2; 4] {
        &self.rect
    }

    pub fn quad(&self) -> &[Vec2; 4] {
        &self.quad
    }

    pub fn homography(&self) -> &Homography {
        &self.homography
    }
}

/// `∫₀¹ √(γ̇ᵀ ℳ(γ) γ̇) dp` with `ℳ = (D𝒯⁻¹)ᵀ D𝒯⁻¹`, by composite midpoint rule.
pub fn metric_arclength(path: &StrandPath, h: &Homography, steps: usize) -> Result<f64, MappingError> {
    let inv = h.inverse();
    let steps = steps.max(1);
    let dp = 1.0 / steps as f64;
    let mut acc = 0.0;
    for i in 0..steps {
        let p = (i as f64 + 0.5) * dp;
        let s = (inv.jacobian(path.point(p))? * path.velocity(p)).norm();
        if !s.is_finite() {
            return Err(MappingError::MetricBlowup(p));
        }
        acc += s;
    }
    Ok(acc * dp)
}

/// Design-space length of the curved-space segment from `s` to
/// `s ± δ x̂` (minus for the over role).
pub fn curved_safety_margin(
    crossing: Vec2,
    margin: f64,
    direction: Vec2,
    h: &Homography,
    role: Role,
    steps: usize,
) -> Result<f64, MappingError> {
    let sign = if role == Role::Over { -1.0 } else { 1.0 };
    let seg = StrandPath::straight(crossing, crossing + direction * (sign * margin));
    metric_arclength(&seg, h, steps)
}

/// `‖D𝒯(γ_d) γ̇_d‖`.
pub fn mapped_parameter_speed(h: &Homography, point: Vec2, velocity: Vec2) -> Result<f64, MappingError> {
    Ok((h.jacobian(point)? * velocity).norm())
}

/// One piece of a track centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TrackPiece {
    Straight { length: f64 },
    /// Positive angle turns left.
    Arc { radius: f64, angle: f64 },
}

impl TrackPiece {
    fn length(&self) -> f64 {
        match *self {
            TrackPiece::Straight { length } => length,
            TrackPiece::Arc { radius, angle } => radius * angle.abs(),
        }
    }
}

/// Piecewise straight/arc centerline starting at `origin` with `heading`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centerline {
    #[serde(default)]
    pub origin: [f64; 2],
    #[serde(default)]
    pub heading: f64,
    pub pieces: Vec<TrackPiece>,
}

impl Centerline {
    pub fn length(&self) -> f64 {
        self.pieces.iter().map(TrackPiece::length).sum()
    }

    fn validate(&self) -> Result<(), MappingError> {
        if self.pieces.is_empty() {
            return Err(MappingError::InvalidCenterline("no pieces".into()));
        }
        for p in &self.pieces {
            let ok = match *p {
                TrackPiece::Straight { length } => length.is_finite() && length > 0.0,
                TrackPiece::Arc { radius, angle } => radius.is_finite() && radius > 0.0 && angle.is_finite() && angle != 0.0,
            };
            if !ok {
                return Err(MappingError::InvalidCenterline(format!("{p:?}")));
            }
        }
        Ok(())
    }

    /// Position and heading at arclength `s`.
    pub fn pose(&self, s: f64) -> (Vec2, f64) {
        let mut pos = Vec2::new(self.origin[0], self.origin[1]);
        let mut psi = self.heading;
        let mut left = s.max(0.0);
        for (n, piece) in self.pieces.iter().enumerate() {
            let len = piece.length();
            let last = n + 1 == self.pieces.len();
            let d = if last { left } else { left.min(len) };
            match *piece {
                TrackPiece::Straight { .. } => pos += Vec2::new(psi.cos(), psi.sin()) * d,
                TrackPiece::Arc { radius, angle } => {
                    let turn = angle.signum() * d / radius;
                    let normal = Vec2::new(-psi.sin(), psi.cos()) * angle.signum();
                    let centre = pos + normal * radius;
                    let rel = pos - centre;
                    let (c, sn) = (turn.cos(), turn.sin());
                    pos = centre + Vec2::new(c * rel.x - sn * rel.y, sn * rel.x + c * rel.y);
                    psi += turn;
                }
            }
            left -= d;
            if left <= 0.0 {
                break;
            }
        }
        (pos, psi)
    }
}

/// Braid points laid on a curved region together with the design grid and
/// per-cell homographies. Cells are indexed by (step, lower row).
#[derive(Debug, Clone)]
pub struct CurvedRegion {
    design: BraidPointGrid,
    curved: BraidPointGrid,
    cells: Vec<Vec<QuadCell>>,
}

impl CurvedRegion {
    /// `design` and `curved` must share shape and time partition.
    pub fn new(design: BraidPointGrid, curved: BraidPointGrid) -> Result<Self, MappingError> {
        if design.steps() != curved.steps() || design.strands() != curved.strands() {
            return Err(MappingError::Geometry(GeometryError::StepCountMismatch {
                expected: design.steps(),
                got: curved.steps(),
            }));
        }
        let n = design.strands();
        let mut cells = Vec::with_capacity(design.steps());
        for i in 1..=design.steps() {
            let mut row_cells = Vec::with_capacity(n - 1);
            for r in 0..n - 1 {
                let pick = |g: &BraidPointGrid| [g.point(i - 1, r), g.point(i, r), g.point(i, r + 1), g.point(i - 1, r + 1)];
                let cell = QuadCell::new(pick(&design), pick(&curved)).map_err(|e| match e {
                    MappingError::NonConvex { .. } => MappingError::NonConvex { step: i, row: r },
                    other => other,
                })?;
                row_cells.push(cell);
            }
            cells.push(row_cells);
        }
        Ok(CurvedRegion { design, curved, cells })
    }

    /// Samples `steps + 1` stations evenly along the centerline and spreads
    /// `strands` rows across `width`. The design rectangle has the
    /// centerline's length and the track's width.
    pub fn from_centerline(
        centerline: &Centerline,
        width: f64,
        strands: usize,
        steps: usize,
        duration: f64,
    ) -> Result<Self, MappingError> {
        centerline.validate()?;
        if !(width > 0.0) {
            return Err(MappingError::InvalidCenterline(format!("width {width}")));
        }
        let length = centerline.length();
        let design = braid_point_grid(strands, steps, &RegionRect::new(width, length, duration)?)?;
        let columns = (0..=steps)
            .map(|q| {
                let (c, psi) = centerline.pose(q as f64 * length / steps as f64);
                let normal = Vec2::new(-psi.sin(), psi.cos());
                (0..strands)
                    .map(|r| c + normal * (r as f64 * width / (strands - 1) as f64 - 0.5 * width))
                    .collect()
            })
            .collect();
        let curved = BraidPointGrid::from_columns(columns, design.times().to_vec())?;
        Self::new(design, curved)
    }

    pub fn design(&self) -> &BraidPointGrid {
        &self.design
    }

    pub fn curved(&self) -> &BraidPointGrid {
        &self.curved
    }

    /// Cell of zero-based step `step` between rows `row` and `row + 1`.
    pub fn cell(&self, step: usize, row: usize) -> &QuadCell {
        &self.cells[step][row]
    }
}
