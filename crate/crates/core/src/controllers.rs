//! Braid controllers: the Stop-Go-Stop hybrid strategy, strand
//! reparameterization, and mixing-limit bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::BraidStep;
use crate::geometry::{
    intersection, safety_margin, strand_path, CrossingInfo, GeometryError, MarginRule, RegionRect, StrandKind,
    StrandPath, WaypointGrid,
};
use crate::mapping::{CurvedRegion, Homography, MappingError};
use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("margin {margin} exceeds strand length {length}; the parameter would reverse")]
    MarginTooLarge { margin: f64, length: f64 },
    #[error("horizon [{start}, {end}] is empty")]
    InvalidHorizon { start: f64, end: f64 },
    #[error("crossing strands of agents {0} and {1} in step {2} do not intersect")]
    NoCrossing(usize, usize, usize),
    #[error("Stop-Go-Stop preconditions fail: {0}")]
    Infeasible(String),
    #[error("curved regions support straight strands only")]
    UnsupportedStrand,
    #[error("step count {got} does not match the grid ({expected})")]
    StepCountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

fn positive(name: &'static str, value: f64) -> Result<f64, ControlError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ControlError::InvalidParameter { name, value })
    }
}

/// Pairwise safety separations `δ_jk`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Separation {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Separation {
    pub fn get(&self, j: usize, k: usize) -> f64 {
        match self {
            Separation::Uniform(d) => *d,
            Separation::Matrix(m) => m[j][k],
        }
    }

    /// Largest entry, `δ̄`.
    pub fn max(&self) -> f64 {
        match self {
            Separation::Uniform(d) => *d,
            Separation::Matrix(m) => {
                m.iter().enumerate().flat_map(|(j, r)| r.iter().enumerate().filter(move |(k, _)| *k != j).map(|(_, v)| *v)).fold(0.0, f64::max)
            }
        }
    }

    /// Symmetric with positive off-diagonal entries, sized for `n` agents.
    pub fn validate(&self, n: usize) -> Result<(), ControlError> {
        match self {
            Separation::Uniform(d) => positive("separation", *d).map(|_| ()),
            Separation::Matrix(m) => {
                if m.len() != n || m.iter().any(|r| r.len() != n) {
                    return Err(ControlError::InvalidParameter { name: "separation matrix size", value: m.len() as f64 });
                }
                for j in 0..n {
                    for k in 0..n {
                        if j != k {
                            positive("separation", m[j][k])?;
                            if m[j][k] != m[k][j] {
                                return Err(ControlError::InvalidParameter { name: "asymmetric separation", value: m[j][k] });
                            }
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Stop-Go-Stop

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Waiting at the step's first braid point.
    StopBefore,
    Go,
    /// Parked at the step's final braid point.
    StopAfter,
}

/// One agent's motion within one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StopGoMotion {
    pub start: Vec2,
    pub end: Vec2,
    /// `ρ̂_{i,j}`.
    pub heading: Vec2,
    pub speed: f64,
    /// `(s_i(j) - 1) τ`.
    pub wait: f64,
    /// One-based release rank `s_i(j)`.
    pub rank: usize,
}

impl StopGoMotion {
    pub fn travel_time(&self) -> f64 {
        if self.speed > 0.0 {
            (self.end - self.start).norm() / self.speed
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopGoStopStep {
    pub t_start: f64,
    pub t_end: f64,
    pub tau: f64,
    pub cos_theta_star: f64,
    /// Agents in release order (`s_i⁻¹`).
    pub release_order: Vec<usize>,
    /// Indexed by agent.
    pub motions: Vec<StopGoMotion>,
}

impl StopGoStopStep {
    pub fn release_time(&self, agent: usize) -> f64 {
        self.t_start + self.motions[agent].wait
    }

    pub fn arrival_time(&self, agent: usize) -> f64 {
        self.release_time(agent) + self.motions[agent].travel_time()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopGoStopPlan {
    pub steps: Vec<StopGoStopStep>,
    pub separation: f64,
    pub v_max: f64,
    /// Whether the sufficient feasibility test held when planning.
    pub feasible: bool,
}

fn step_containing(times: &[f64], t: f64) -> usize {
    // step i covers (t_{i-1}, t_i]; t_0 belongs to the first step
    let last = times.len() - 2;
    times.partition_point(|&x| x < t).saturating_sub(1).min(last)
}

impl StopGoStopPlan {
    pub fn times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.steps.iter().map(|s| s.t_start).collect();
        t.push(self.steps.last().map_or(0.0, |s| s.t_end));
        t
    }

    fn step_at(&self, t: f64) -> &StopGoStopStep {
        let times = self.times();
        &self.steps[step_containing(&times, t)]
    }

    pub fn mode(&self, agent: usize, t: f64) -> Mode {
        let s = self.step_at(t);
        if t < s.release_time(agent) {
            Mode::StopBefore
        } else if t < s.arrival_time(agent) {
            Mode::Go
        } else {
            Mode::StopAfter
        }
    }

    /// Commanded velocity; right-continuous at switching times.
    pub fn velocity(&self, agent: usize, t: f64) -> Vec2 {
        let times = self.times();
        let idx = times.partition_point(|&x| x <= t).saturating_sub(1).min(self.steps.len() - 1);
        let s = &self.steps[idx];
        let m = &s.motions[agent];
        if t >= s.release_time(agent) && t < s.arrival_time(agent) {
            m.heading * m.speed
        } else {
            Vec2::zeros()
        }
    }

    /// Nominal position.
    pub fn position(&self, agent: usize, t: f64) -> Vec2 {
        let s = self.step_at(t);
        let m = &s.motions[agent];
        let moving = (t - s.release_time(agent)).clamp(0.0, m.travel_time());
        m.start + m.heading * (m.speed * moving)
    }

    /// Every switching instant, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = self.times();
        for s in &self.steps {
            for a in 0..s.motions.len() {
                out.push(s.release_time(a));
                out.push(s.arrival_time(a));
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Largest separation for which a stopped agent keeps clear of a moving
/// neighbour crossing the same cell: the altitude of the cell's right
/// triangle, `a w / √(a² + w²)`.
pub fn stop_go_stop_clearance(row_spacing: f64, column_spacing: f64) -> f64 {
    let (a, w) = (row_spacing, column_spacing);
    if a == 0.0 || w == 0.0 {
        return 0.0;
    }
    a * w / a.hypot(w)
}

/// Sufficient test for the Stop-Go-Stop controller: the timing inequality
/// `cos θ* v_max (min Δt − (N−1)τ) ≥ √(ℓ²/M² + h²)` together with
/// braid-point clearance.
pub fn stop_go_stop_feasible(
    strands: usize,
    steps: usize,
    region: &RegionRect,
    separation: f64,
    v_max: f64,
    times: &[f64],
) -> bool {
    if strands < 2 || steps == 0 || times.len() != steps + 1 || !(v_max > 0.0) || !(separation >= 0.0) {
        return false;
    }
    let w = region.length / steps as f64;
    let h = region.height;
    let a = h / (strands - 1) as f64;
    let hyp = w.hypot(h);
    let cos_star = w / hyp;
    let tau = separation / (v_max * cos_star);
    let min_dt = times.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
    let timing = cos_star * v_max * (min_dt - (strands - 1) as f64 * tau) >= hyp;
    let clear = separation <= stop_go_stop_clearance(a, w) || (h == 0.0 && separation == 0.0);
    timing && clear
}

/// Largest `M ≤ limit` whose uniform partition passes [`stop_go_stop_feasible`].
pub fn max_feasible_steps(strands: usize, region: &RegionRect, separation: f64, v_max: f64, limit: usize) -> Option<usize> {
    (1..=limit).rev().find(|&m| {
        let times = crate::geometry::uniform_times(m, region.duration);
        stop_go_stop_feasible(strands, m, region, separation, v_max, &times)
    })
}

/// Builds the Stop-Go-Stop plan without enforcing feasibility; the result's
/// `feasible` flag records the test outcome.
pub fn stop_go_stop_plan_unchecked(grid: &WaypointGrid, v_max: f64, separation: f64) -> Result<StopGoStopPlan, ControlError> {
    positive("v_max", v_max)?;
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(ControlError::InvalidParameter { name: "separation", value: separation });
    }
    let n = grid.strands();
    let times = grid.times();
    let mut feasible = true;
    let mut steps = Vec::with_capacity(grid.steps());
    for i in 1..=grid.steps() {
        let col0 = grid.grid().column(i - 1);
        let col1 = grid.grid().column(i);
        let w = (col1[0].x - col0[0].x).abs();
        let ys = col0.iter().map(|p| p.y);
        let h = ys.clone().fold(f64::NEG_INFINITY, f64::max) - ys.fold(f64::INFINITY, f64::min);
        let hyp = w.hypot(h);
        let cos_star = if hyp > 0.0 { w / hyp } else { 1.0 };
        let tau = separation / (v_max * cos_star);
        let (t0, t1) = (times[i - 1], times[i]);

        let travel: Vec<Vec2> = (0..n).map(|j| grid.point(i, j) - grid.point(i - 1, j)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        // farthest first; stable sort keeps the lower index first on ties
        order.sort_by(|&x, &y| travel[y].norm().total_cmp(&travel[x].norm()));
        let cos_of = |d: Vec2| if d.norm() > 0.0 { d.x.abs() / d.norm() } else { 1.0 };
        let cos_first = cos_of(travel[order[0]]);
        let mut motions: Vec<Option<StopGoMotion>> = vec![None; n];
        for (rank0, &j) in order.iter().enumerate() {
            let d = travel[j];
            let dist = d.norm();
            let heading = if dist > 0.0 { d / dist } else { Vec2::zeros() };
            motions[j] = Some(StopGoMotion {
                start: grid.point(i - 1, j),
                end: grid.point(i, j),
                heading,
                speed: v_max * cos_first / cos_of(d),
                wait: rank0 as f64 * tau,
                rank: rank0 + 1,
            });
        }
        let a = (0..n.saturating_sub(1)).map(|r| (col0[r + 1] - col0[r]).norm()).fold(f64::INFINITY, f64::min);
        let timing = cos_star * v_max * ((t1 - t0) - (n - 1) as f64 * tau) >= hyp;
        feasible &= timing && separation <= stop_go_stop_clearance(a, w);
        steps.push(StopGoStopStep {
            t_start: t0,
            t_end: t1,
            tau,
            cos_theta_star: cos_star,
            release_order: order,
            motions: motions.into_iter().map(Option::unwrap).collect(),
        });
    }
    Ok(StopGoStopPlan { steps, separation, v_max, feasible })
}

/// Stop-Go-Stop plan; fails when the sufficient feasibility test does.
pub fn stop_go_stop_plan(grid: &WaypointGrid, v_max: f64, separation: f64) -> Result<StopGoStopPlan, ControlError> {
    let plan = stop_go_stop_plan_unchecked(grid, v_max, separation)?;
    if !plan.feasible {
        return Err(ControlError::Infeasible(format!(
            "separation {separation} with v_max {v_max} leaves too little time or clearance"
        )));
    }
    Ok(plan)
}

// ---------------------------------------------------------------------------
// Reparameterization

/// Crossing role within an interacting pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Crosses the intersection first: fast, then slow.
    Under,
    /// Crosses second: slow, then fast.
    Over,
    None,
}

impl Role {
    pub fn sign(self) -> f64 {
        match self {
            Role::Under => 1.0,
            Role::Over => -1.0,
            Role::None => 0.0,
        }
    }
}

/// Two-phase constant-velocity parameter schedule on `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Parameterization {
    pub t_start: f64,
    pub t_mid: f64,
    pub t_end: f64,
    /// Parameter reached at `t_mid`.
    pub p_mid: f64,
    pub first_velocity: f64,
    pub second_velocity: f64,
    pub role: Role,
    pub length: f64,
    pub margin: f64,
}

impl Parameterization {
    fn from_midpoint(t0: f64, t1: f64, p_mid: f64, role: Role, length: f64, margin: f64) -> Self {
        let t_mid = 0.5 * (t0 + t1);
        Parameterization {
            t_start: t0,
            t_mid,
            t_end: t1,
            p_mid,
            first_velocity: p_mid / (t_mid - t0),
            second_velocity: (1.0 - p_mid) / (t1 - t_mid),
            role,
            length,
            margin,
        }
    }

    /// `p(t)`, clamped outside the horizon. Exact at both ends.
    pub fn position(&self, t: f64) -> f64 {
        if t <= self.t_start {
            0.0
        } else if t >= self.t_end {
            1.0
        } else if t <= self.t_mid {
            self.first_velocity * (t - self.t_start)
        } else {
            1.0 - self.second_velocity * (self.t_end - t)
        }
    }

    /// `ṗ(t)`; right-continuous at `t_mid`.
    pub fn velocity(&self, t: f64) -> f64 {
        if t < self.t_mid {
            self.first_velocity
        } else {
            self.second_velocity
        }
    }

    /// `½ ∫ ṗ² dt`.
    pub fn energy(&self) -> f64 {
        0.5 * (self.first_velocity.powi(2) * (self.t_mid - self.t_start)
            + self.second_velocity.powi(2) * (self.t_end - self.t_mid))
    }
}

fn check_horizon(t0: f64, t1: f64) -> Result<(), ControlError> {
    if t0.is_finite() && t1.is_finite() && t1 > t0 {
        Ok(())
    } else {
        Err(ControlError::InvalidHorizon { start: t0, end: t1 })
    }
}

/// Minimum-energy schedule reaching `(Δ ± δ)/(2Δ)` at mid-horizon.
pub fn reparameterize(length: f64, margin: f64, t0: f64, t1: f64, role: Role) -> Result<Parameterization, ControlError> {
    positive("strand length", length)?;
    check_horizon(t0, t1)?;
    if !(margin >= 0.0) {
        return Err(ControlError::InvalidParameter { name: "margin", value: margin });
    }
    if margin > length {
        return Err(ControlError::MarginTooLarge { margin, length });
    }
    let delta = if role == Role::None { 0.0 } else { margin };
    let p_mid = (length + role.sign() * delta) / (2.0 * length);
    Ok(Parameterization::from_midpoint(t0, t1, p_mid, role, length, delta))
}

/// Schedule that puts the agent a full margin `δ` (along the strand) past or
/// before the crossing parameter `π` at mid-horizon. With both members of a
/// pair scheduled this way, at most one of them is inside the safety
/// separation region at any time.
pub fn reparameterize_crossing(
    length: f64,
    crossing_param: f64,
    margin: f64,
    t0: f64,
    t1: f64,
    role: Role,
) -> Result<Parameterization, ControlError> {
    positive("strand length", length)?;
    check_horizon(t0, t1)?;
    if !(margin >= 0.0) {
        return Err(ControlError::InvalidParameter { name: "margin", value: margin });
    }
    if !(0.0..=1.0).contains(&crossing_param) {
        return Err(ControlError::InvalidParameter { name: "crossing parameter", value: crossing_param });
    }
    if role == Role::None {
        return Ok(Parameterization::from_midpoint(t0, t1, 0.5, role, length, 0.0));
    }
    let p_mid = crossing_param + role.sign() * margin / length;
    if !(0.0..=1.0).contains(&p_mid) {
        return Err(ControlError::MarginTooLarge { margin, length });
    }
    Ok(Parameterization::from_midpoint(t0, t1, p_mid, role, length, margin))
}

/// One agent's strand and schedule for one step, optionally pushed through a
/// projective cell map.
#[derive(Debug, Clone)]
pub struct StrandPlan {
    pub path: StrandPath,
    pub schedule: Parameterization,
    pub map: Option<Homography>,
}

impl StrandPlan {
    pub fn position(&self, t: f64) -> Vec2 {
        let r = self.path.point(self.schedule.position(t));
        match &self.map {
            Some(h) => h.map_point(r).expect("strand stays inside its cell"),
            None => r,
        }
    }

    pub fn velocity(&self, t: f64) -> Vec2 {
        let p = self.schedule.position(t);
        let v = self.path.velocity(p) * self.schedule.velocity(t);
        match &self.map {
            Some(h) => h.jacobian(self.path.point(p)).expect("strand stays inside its cell") * v,
            None => v,
        }
    }
}

/// An interacting pair in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedCrossing {
    pub step: usize,
    pub under: usize,
    pub over: usize,
    /// Crossing in output space; `param_j` belongs to the under agent.
    pub info: CrossingInfo,
    /// Along-path margin `δ` in output space.
    pub margin: f64,
    pub separation: f64,
}

/// Reparameterized strands for every agent and step.
#[derive(Debug, Clone)]
pub struct ReparamPlan {
    times: Vec<f64>,
    strands: Vec<Vec<StrandPlan>>,
    crossings: Vec<PlannedCrossing>,
}

impl ReparamPlan {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.strands.len()
    }

    pub fn agents(&self) -> usize {
        self.strands.first().map_or(0, Vec::len)
    }

    /// Zero-based step whose horizon `(t_{i-1}, t_i]` contains `t`.
    pub fn step_at(&self, t: f64) -> usize {
        step_containing(&self.times, t)
    }

    pub fn strand(&self, step: usize, agent: usize) -> &StrandPlan {
        &self.strands[step][agent]
    }

    pub fn crossings(&self) -> &[PlannedCrossing] {
        &self.crossings
    }

    pub fn position(&self, agent: usize, t: f64) -> Vec2 {
        self.strands[self.step_at(t)][agent].position(t)
    }

    /// Right-continuous reference velocity.
    pub fn velocity(&self, agent: usize, t: f64) -> Vec2 {
        let idx = self.times.partition_point(|&x| x <= t).saturating_sub(1).min(self.steps() - 1);
        self.strands[idx][agent].velocity(t)
    }

    /// Step boundaries and mid-step switching times, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = self.times.clone();
        out.extend(self.strands.iter().map(|s| s[0].schedule.t_mid));
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Plans every step of a scheduled braid in a rectangular region.
pub fn reparameterization_plan(
    grid: &WaypointGrid,
    steps: &[BraidStep],
    kind: StrandKind,
    separation: &Separation,
) -> Result<ReparamPlan, ControlError> {
    plan_with_cells(grid, steps, kind, separation, None)
}

/// Plans a braid in a curved region: straight design-space strands mapped
/// through the per-cell homographies, with crossings and margins computed in
/// the curved space.
pub fn curved_reparameterization_plan(
    region: &CurvedRegion,
    grid: &WaypointGrid,
    steps: &[BraidStep],
    separation: &Separation,
) -> Result<ReparamPlan, ControlError> {
    plan_with_cells(grid, steps, StrandKind::Straight, separation, Some(region))
}

fn plan_with_cells(
    grid: &WaypointGrid,
    steps: &[BraidStep],
    kind: StrandKind,
    separation: &Separation,
    region: Option<&CurvedRegion>,
) -> Result<ReparamPlan, ControlError> {
    let n = grid.strands();
    if steps.len() != grid.steps() {
        return Err(ControlError::StepCountMismatch { expected: grid.steps(), got: steps.len() });
    }
    if region.is_some() && kind != StrandKind::Straight {
        return Err(ControlError::UnsupportedStrand);
    }
    separation.validate(n)?;
    let times = grid.times().to_vec();
    let mut all = Vec::with_capacity(steps.len());
    let mut crossings = Vec::new();
    for (idx, step) in steps.iter().enumerate() {
        let i = idx + 1;
        let (t0, t1) = (times[idx], times[idx + 1]);
        let cell_map = |row: usize| region.map(|r| r.cell(idx, row.min(n - 2)).homography().clone());
        let mut plans: Vec<Option<StrandPlan>> = vec![None; n];
        for g in step.crossings() {
            let lower = g.index() - 1;
            let lo = grid.agent_at_row(i - 1, lower);
            let hi = grid.agent_at_row(i - 1, lower + 1);
            // positive generator: the lower agent crosses over the upper one
            let (under, over) = if g.is_inverse() { (lo, hi) } else { (hi, lo) };
            let sep = separation.get(under, over);
            let map = cell_map(lower);
            let rect = |a: usize| strand_path(grid.point(i - 1, a), grid.point(i, a), kind);
            let (ru, ro) = (rect(under), rect(over));
            let (su, so) = match &map {
                Some(h) => (map_straight(h, &ru)?, map_straight(h, &ro)?),
                None => (ru.clone(), ro.clone()),
            };
            let info = intersection(&su, &so)?.ok_or(ControlError::NoCrossing(under, over, i))?;
            let rule = match kind {
                StrandKind::Straight => MarginRule::Straight,
                StrandKind::CityBlock => MarginRule::CityBlock,
            };
            let rise = (grid.point(i, under).y - grid.point(i - 1, under).y).abs();
            let margin = safety_margin(&info, sep, rule, 2, rise, su.length().min(so.length()))?;
            let (pu, du, po, d_o) = match &map {
                None => (info.param_j, margin, info.param_k, margin),
                Some(h) => {
                    // move the quad-space margin back to design-space parameters
                    let back = |path: &StrandPath, q: Vec2| -> Result<f64, ControlError> {
                        let r = h.inverse_map_point(q)?;
                        Ok((r - path.start()).norm())
                    };
                    let s = info.point;
                    let du_q = s + su.chord_direction() * margin;
                    let do_q = s - so.chord_direction() * margin;
                    let cu = back(&ru, s)?;
                    let co = back(&ro, s)?;
                    (cu / ru.length(), back(&ru, du_q)? - cu, co / ro.length(), co - back(&ro, do_q)?)
                }
            };
            let sched_u = reparameterize_crossing(ru.length(), pu, du, t0, t1, Role::Under)?;
            let sched_o = reparameterize_crossing(ro.length(), po, d_o, t0, t1, Role::Over)?;
            plans[under] = Some(StrandPlan { path: ru, schedule: sched_u, map: map.clone() });
            plans[over] = Some(StrandPlan { path: ro, schedule: sched_o, map });
            crossings.push(PlannedCrossing { step: i, under, over, info, margin, separation: sep });
        }
        for (a, slot) in plans.iter_mut().enumerate() {
            if slot.is_none() {
                let path = strand_path(grid.point(i - 1, a), grid.point(i, a), kind);
                let len = path.length();
                let schedule = if len > 0.0 {
                    reparameterize(len, 0.0, t0, t1, Role::None)?
                } else {
                    Parameterization::from_midpoint(t0, t1, 0.5, Role::None, 0.0, 0.0)
                };
                *slot = Some(StrandPlan { path, schedule, map: cell_map(grid.row(i - 1, a)) });
            }
        }
        all.push(plans.into_iter().map(Option::unwrap).collect());
    }
    Ok(ReparamPlan { times, strands: all, crossings })
}

fn map_straight(h: &Homography, path: &StrandPath) -> Result<StrandPath, ControlError> {
    Ok(StrandPath::straight(h.map_point(path.start())?, h.map_point(path.end())?))
}

// ---------------------------------------------------------------------------
// Bounds

/// Upper bound on the mixing limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingBound {
    pub strands: usize,
    pub height: f64,
    pub length: f64,
    pub duration: f64,
    pub separation: f64,
    pub v_max: f64,
    /// `ℓ √(4h² − δ̄²(N−1)²) / (δ̄ h)`.
    pub geometric_term: f64,
    /// `(N−1)(v_max T − (ℓ + δ̄)) / h − ½`.
    pub time_term: f64,
    pub value: u64,
}

/// `M* ≤ ⌊min{ℓ√(4h² − δ̄²(N−1)²)/(δ̄h), (N−1)(v_max T − (ℓ+δ̄))/h − ½}⌋`,
/// clamped at zero. Zero whenever `δ̄ > h/(N−1)`.
pub fn mixing_limit_upper(
    strands: usize,
    height: f64,
    length: f64,
    duration: f64,
    separation: f64,
    v_max: f64,
) -> Result<MixingBound, ControlError> {
    if strands < 2 {
        return Err(ControlError::InvalidParameter { name: "strands", value: strands as f64 });
    }
    for (name, v) in [("height", height), ("length", length), ("duration", duration), ("separation", separation), ("v_max", v_max)] {
        positive(name, v)?;
    }
    let n1 = (strands - 1) as f64;
    let radicand = 4.0 * height * height - separation * separation * n1 * n1;
    let geometric_term = if radicand > 0.0 { length * radicand.sqrt() / (separation * height) } else { 0.0 };
    let time_term = n1 * (v_max * duration - (length + separation)) / height - 0.5;
    let m = geometric_term.min(time_term);
    let value = if separation > height / n1 || m <= 0.0 {
        0
    } else {
        // absorb round-off just below an exact integer
        (m * (1.0 + 4.0 * f64::EPSILON)).floor() as u64
    };
    Ok(MixingBound { strands, height, length, duration, separation, v_max, geometric_term, time_term, value })
}

/// Bounds on the length of a sufficiently regular strand between adjacent
/// braid points: the diagonal and the city-block length.
pub fn arclength_bounds(strands: usize, steps: usize, height: f64, length: f64) -> (f64, f64) {
    let a = height / (strands.max(2) - 1) as f64;
    let w = length / steps.max(1) as f64;
    (a.hypot(w), a + w)
}
