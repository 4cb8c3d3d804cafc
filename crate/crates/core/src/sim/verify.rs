use serde::Serialize;

use crate::controllers::{mixing_limit_upper, stop_go_stop_feasible};
use crate::Vec2;

use super::engine::{Prepared, TrajectoryLog};
use super::scenario::ControllerKind;

/// Thresholds for the two verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Largest acceptable `‖y_j(t_i) − ξ(i, j)‖`.
    pub waypoint: f64,
    /// Allowed shortfall below `δ_jk` attributable to sampling.
    pub collision_slack: f64,
}

impl Tolerances {
    /// Exact controllers: `1e-9` on braid points and `v_max·dt` sampling
    /// slack. Tracking controllers: a fraction of the region diagonal
    /// (`1e-3` for single integrators, `1e-2` for unicycles), no slack.
    pub fn for_prepared(prepared: &Prepared) -> Self {
        let sc = &prepared.scenario;
        let diagonal = prepared.region.diagonal();
        let waypoint = sc.waypoint_tolerance.unwrap_or(match sc.controller {
            ControllerKind::StopGoStop | ControllerKind::ReparameterizeExact => 1e-9,
            ControllerKind::ReparameterizeLq => 1e-3 * diagonal,
            ControllerKind::ReparameterizeUnicycle => 1e-2 * diagonal,
        });
        let collision_slack = if sc.controller.is_exact() { sc.v_max * sc.dt() } else { 0.0 };
        Tolerances { waypoint, collision_slack }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub scenario_hash: String,
    pub controller: String,
    pub agents: usize,
    pub steps: usize,
    /// Smallest pairwise distance, refined between samples around the
    /// sampled minimum.
    pub min_distance: f64,
    pub min_distance_sampled: f64,
    pub min_pair: (usize, usize),
    pub min_time: f64,
    /// Smallest `d_jk − δ_jk` over pairs, sampled.
    pub worst_clearance: f64,
    pub worst_pair: (usize, usize),
    /// `max_j ‖y_j(t_i) − ξ(i, j)‖` for `i = 0..M`.
    pub waypoint_errors: Vec<f64>,
    pub max_waypoint_error: f64,
    pub collision_free: bool,
    pub braid_point_feasible: bool,
    pub tolerances: Tolerances,
    pub mixing_bound: u64,
    pub exceeds_mixing_bound: bool,
    pub stop_go_stop_feasible: bool,
    /// Largest sampled speed (finite differences of the log).
    pub max_speed: f64,
    pub speed_exceeds_v_max: bool,
    pub precondition_flags: Vec<String>,
    pub verified: bool,
}

/// Minimum of `‖p + s d‖` over `s ∈ [0, 1]` and where it occurs.
fn segment_min(p: Vec2, d: Vec2) -> (f64, f64) {
    let dd = d.norm_squared();
    let s = if dd > 0.0 { (-p.dot(&d) / dd).clamp(0.0, 1.0) } else { 0.0 };
    ((p + d * s).norm(), s)
}

/// Checks collision-freedom and braid-point feasibility of a run, and adds
/// the mixing-limit advisories.
pub fn verify(log: &TrajectoryLog, prepared: &Prepared, tol: Tolerances) -> VerificationReport {
    let sc = &prepared.scenario;
    let n = sc.agents;
    let sep = &sc.separation;

    let mut min_d = f64::INFINITY;
    let mut min_pair = (0, 1);
    let mut min_idx = 0usize;
    let mut worst = f64::INFINITY;
    let mut worst_pair = (0, 1);
    for (k, row) in log.positions.iter().enumerate() {
        for a in 0..n {
            for b in a + 1..n {
                let d = (row[a] - row[b]).norm();
                if d < min_d {
                    (min_d, min_pair, min_idx) = (d, (a, b), k);
                }
                let c = d - sep.get(a, b);
                if c < worst {
                    (worst, worst_pair) = (c, (a, b));
                }
            }
        }
    }
    let sampled = min_d;
    let mut min_time = log.times.get(min_idx).copied().unwrap_or(0.0);
    if !log.positions.is_empty() {
        let (a, b) = min_pair;
        let rel = |k: usize| log.positions[k][a] - log.positions[k][b];
        for (lo, hi) in [(min_idx.wrapping_sub(1), min_idx), (min_idx, min_idx + 1)] {
            if lo < log.positions.len() && hi < log.positions.len() {
                let (d, s) = segment_min(rel(lo), rel(hi) - rel(lo));
                if d < min_d {
                    min_d = d;
                    min_time = log.times[lo] + s * (log.times[hi] - log.times[lo]);
                }
            }
        }
        worst = worst.min(min_d - sep.get(a, b));
    }

    let waypoint_errors: Vec<f64> = log
        .waypoint_hits
        .iter()
        .map(|hit| {
            (0..n).map(|j| (hit.positions[j] - prepared.waypoints.point(hit.step, j)).norm()).fold(0.0, f64::max)
        })
        .collect();
    let max_waypoint_error = waypoint_errors.iter().copied().fold(0.0, f64::max);
    let all_steps_hit = log.waypoint_hits.len() == prepared.steps.len() + 1;

    let max_speed = log
        .positions
        .windows(2)
        .zip(log.times.windows(2))
        .flat_map(|(p, t)| (0..n).map(move |j| (p[1][j] - p[0][j]).norm() / (t[1] - t[0])))
        .fold(0.0, f64::max);

    let r = &prepared.region;
    let m = prepared.steps.len();
    let delta_bar = sep.max();
    let mixing_bound = mixing_limit_upper(n, r.height, r.length, r.duration, delta_bar, sc.v_max).map_or(0, |b| b.value);
    let sgs = stop_go_stop_feasible(n, m, r, delta_bar, sc.v_max, prepared.design.times());

    let collision_free = log.positions.is_empty() || worst >= -tol.collision_slack;
    let braid_point_feasible = all_steps_hit && max_waypoint_error <= tol.waypoint;
    VerificationReport {
        scenario_hash: log.scenario_hash.clone(),
        controller: sc.controller.name().to_string(),
        agents: n,
        steps: m,
        min_distance: min_d,
        min_distance_sampled: sampled,
        min_pair,
        min_time,
        worst_clearance: worst,
        worst_pair,
        waypoint_errors,
        max_waypoint_error,
        collision_free,
        braid_point_feasible,
        tolerances: tol,
        mixing_bound,
        exceeds_mixing_bound: m as u64 > mixing_bound,
        stop_go_stop_feasible: sgs,
        max_speed,
        speed_exceeds_v_max: max_speed > sc.v_max * (1.0 + 1e-9),
        precondition_flags: prepared.flags.clone(),
        verified: collision_free && braid_point_feasible,
    }
}
