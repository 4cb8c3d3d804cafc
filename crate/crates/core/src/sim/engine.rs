use std::sync::Arc;

use crate::algebra::{parse_braid_word, schedule_steps, BraidStep, BraidWord};
use crate::controllers::{
    curved_reparameterization_plan, reparameterization_plan, stop_go_stop_plan_unchecked, ReparamPlan, Separation,
    StopGoStopPlan,
};
use crate::geometry::{braid_point_grid, waypoints, BraidPointGrid, RegionRect, StrandKind, WaypointGrid};
use crate::mapping::CurvedRegion;
use crate::tracking::{
    control_closed_loop_guarded, solve_gains, unicycle_map, Reference, TrackingGains, TrackingProblem,
};
use crate::Vec2;

use super::scenario::{ControllerKind, RegionSpec, Scenario};
use super::SimError;

/// Nominal motion produced by a braid controller.
#[derive(Debug, Clone)]
pub enum Plan {
    StopGoStop(StopGoStopPlan),
    Reparameterized(ReparamPlan),
}

impl Plan {
    pub fn position(&self, agent: usize, t: f64) -> Vec2 {
        match self {
            Plan::StopGoStop(p) => p.position(agent, t),
            Plan::Reparameterized(p) => p.position(agent, t),
        }
    }

    pub fn velocity(&self, agent: usize, t: f64) -> Vec2 {
        match self {
            Plan::StopGoStop(p) => p.velocity(agent, t),
            Plan::Reparameterized(p) => p.velocity(agent, t),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Plan::StopGoStop(p) => p.breakpoints(),
            Plan::Reparameterized(p) => p.breakpoints(),
        }
    }
}

/// A scenario resolved into a schedule, braid points and a plan.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub word: BraidWord,
    pub steps: Vec<BraidStep>,
    /// Design-space braid points.
    pub design: WaypointGrid,
    /// Braid points in the space agents move in.
    pub waypoints: WaypointGrid,
    pub curved: Option<CurvedRegion>,
    pub plan: Arc<Plan>,
    /// Design rectangle used for the mixing-limit advisories.
    pub region: RegionRect,
    /// Violated controller preconditions; the run still proceeds.
    pub flags: Vec<String>,
}

fn precondition(e: impl std::fmt::Display) -> SimError {
    SimError::Precondition(e.to_string())
}

/// Parses, schedules and plans a scenario.
pub fn prepare(scenario: &Scenario) -> Result<Prepared, SimError> {
    scenario.validate()?;
    let n = scenario.agents;
    let word = parse_braid_word(&scenario.braid, n).map_err(precondition)?;
    let steps = schedule_steps(&word, scenario.honor_braces).map_err(precondition)?;
    let m = steps.len();
    let (region, curved) = match &scenario.region {
        RegionSpec::Rect { height, length } => (RegionRect::new(*height, *length, scenario.duration).map_err(precondition)?, None),
        RegionSpec::Curved { centerline, width } => {
            let c = CurvedRegion::from_centerline(centerline, *width, n, m, scenario.duration).map_err(precondition)?;
            (RegionRect::new(*width, centerline.length(), scenario.duration).map_err(precondition)?, Some(c))
        }
        RegionSpec::Quads { height, length, columns } => {
            let region = RegionRect::new(*height, *length, scenario.duration).map_err(precondition)?;
            if columns.len() != m + 1 {
                return Err(SimError::Precondition(format!("{} braid point columns given for {m} steps", columns.len())));
            }
            let design = braid_point_grid(n, m, &region).map_err(precondition)?;
            let cols = columns.iter().map(|c| c.iter().map(|p| Vec2::new(p[0], p[1])).collect()).collect();
            let curved = BraidPointGrid::from_columns(cols, design.times().to_vec()).map_err(precondition)?;
            (region, Some(CurvedRegion::new(design, curved).map_err(precondition)?))
        }
    };
    let design_grid = match &curved {
        Some(c) => c.design().clone(),
        None => braid_point_grid(n, m, &region).map_err(precondition)?,
    };
    let design = waypoints(design_grid, &steps).map_err(precondition)?;
    let out = match &curved {
        Some(c) => waypoints(c.curved().clone(), &steps).map_err(precondition)?,
        None => design.clone(),
    };

    let inflate = scenario.margin_inflation;
    let planning_sep = match &scenario.separation {
        Separation::Uniform(d) => Separation::Uniform(d * inflate),
        Separation::Matrix(rows) => Separation::Matrix(rows.iter().map(|r| r.iter().map(|v| v * inflate).collect()).collect()),
    };
    let mut flags = Vec::new();
    let plan = match scenario.controller {
        ControllerKind::StopGoStop => {
            if scenario.strand != StrandKind::Straight {
                return Err(SimError::Precondition("stop-go-stop needs straight strands".into()));
            }
            let p = stop_go_stop_plan_unchecked(&design, scenario.v_max, planning_sep.max()).map_err(precondition)?;
            if !p.feasible {
                flags.push("stop-go-stop sufficient feasibility test fails".to_string());
            }
            Plan::StopGoStop(p)
        }
        _ => {
            let p = match &curved {
                Some(c) => curved_reparameterization_plan(c, &design, &steps, &planning_sep),
                None => reparameterization_plan(&design, &steps, scenario.strand, &planning_sep),
            }
            .map_err(precondition)?;
            Plan::Reparameterized(p)
        }
    };
    let peak = nominal_peak_speed(&plan, &out);
    if peak > scenario.v_max * (1.0 + 1e-9) {
        flags.push(format!("planned speed {peak} exceeds v_max {}", scenario.v_max));
    }
    Ok(Prepared { scenario: scenario.clone(), word, steps, design, waypoints: out, curved, plan: Arc::new(plan), region, flags })
}

/// Largest nominal speed, sampled densely between breakpoints.
fn nominal_peak_speed(plan: &Plan, grid: &WaypointGrid) -> f64 {
    let times = grid.times();
    let mut cuts: Vec<f64> = plan.breakpoints();
    cuts.extend_from_slice(times);
    cuts.retain(|t| *t >= times[0] && *t <= times[times.len() - 1]);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut peak: f64 = 0.0;
    for w in cuts.windows(2) {
        for k in 0..=16 {
            // stay strictly inside so one-sided velocities belong to this piece
            let t = w[0] + (w[1] - w[0]) * (0.001 + 0.998 * k as f64 / 16.0);
            for j in 0..grid.strands() {
                peak = peak.max(plan.velocity(j, t).norm());
            }
        }
    }
    peak
}

/// Sampled outputs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub agents: usize,
    pub times: Vec<f64>,
    /// `positions[sample][agent]`.
    pub positions: Vec<Vec<Vec2>>,
    /// Unicycle headings, `headings[sample][agent]`.
    pub headings: Option<Vec<Vec<f64>>>,
    /// States at every `t_i`, including `t_0`.
    pub waypoint_hits: Vec<WaypointHit>,
    pub scenario_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointHit {
    pub step: usize,
    pub time: f64,
    pub positions: Vec<Vec2>,
}

impl TrajectoryLog {
    pub fn empty(agents: usize) -> Self {
        TrajectoryLog { agents, times: Vec::new(), positions: Vec::new(), headings: None, waypoint_hits: Vec::new(), scenario_hash: String::new() }
    }
}

#[derive(Debug, Clone, Copy)]
struct AgentState {
    x: Vec2,
    theta: f64,
}

struct Tracker {
    gains: TrackingGains,
    held: Option<Vec2>,
}

/// Runs a prepared scenario with fixed-step integration.
pub fn simulate(prepared: &Prepared) -> Result<TrajectoryLog, SimError> {
    let sc = &prepared.scenario;
    let n = sc.agents;
    let total = sc.duration;
    let samples = ((total / sc.dt()) - 1e-9).ceil().max(1.0) as usize;
    let sample_time = |k: usize| if k == samples { total } else { total * k as f64 / samples as f64 };
    let step_times = prepared.waypoints.times().to_vec();
    let mut events: Vec<f64> = prepared.plan.breakpoints().into_iter().filter(|&t| t > 0.0 && t < total).collect();
    events.extend(step_times.iter().copied().filter(|&t| t > 0.0 && t < total));
    events.sort_by(f64::total_cmp);
    events.dedup();

    let mut state: Vec<AgentState> =
        (0..n).map(|j| AgentState { x: prepared.waypoints.point(0, j), theta: sc.initial_heading }).collect();
    let unicycle = sc.controller == ControllerKind::ReparameterizeUnicycle;
    let mut log = TrajectoryLog {
        agents: n,
        times: Vec::with_capacity(samples + 1),
        positions: Vec::with_capacity(samples + 1),
        headings: unicycle.then(Vec::new),
        waypoint_hits: vec![WaypointHit { step: 0, time: 0.0, positions: state.iter().map(|s| s.x).collect() }],
        scenario_hash: sc.hash(),
    };
    let record = |log: &mut TrajectoryLog, t: f64, state: &[AgentState]| {
        log.times.push(t);
        log.positions.push(state.iter().map(|s| s.x).collect());
        if let Some(h) = log.headings.as_mut() {
            h.push(state.iter().map(|s| s.theta).collect());
        }
    };
    record(&mut log, 0.0, &state);

    let mut trackers: Vec<Tracker> = Vec::new();
    let mut step = 0usize;
    let mut t = 0.0;
    let mut next_event = 0usize;
    for k in 1..=samples {
        let target = sample_time(k);
        while t < target {
            // entering a new braid step
            if !sc.controller.is_exact() && (trackers.is_empty() || t >= step_times[step + 1]) {
                if !trackers.is_empty() {
                    step += 1;
                }
                trackers = build_trackers(prepared, step, &state)?;
            } else if sc.controller.is_exact() && t >= step_times[step + 1] {
                step += 1;
            }
            while next_event < events.len() && events[next_event] <= t {
                next_event += 1;
            }
            let b = events.get(next_event).copied().filter(|&e| e < target).unwrap_or(target);
            advance(prepared, &mut state, &mut trackers, step, t, b)?;
            t = b;
            if step_times.get(step + 1).is_some_and(|&ti| ti == t) {
                log.waypoint_hits.push(WaypointHit { step: step + 1, time: t, positions: state.iter().map(|s| s.x).collect() });
            }
        }
        t = target;
        record(&mut log, target, &state);
    }
    Ok(log)
}

fn build_trackers(prepared: &Prepared, step: usize, state: &[AgentState]) -> Result<Vec<Tracker>, SimError> {
    let sc = &prepared.scenario;
    let times = prepared.waypoints.times();
    let (t0, t1) = (times[step], times[step + 1]);
    // gain nodes land on the mid-step switch and at most half a time step apart
    let intervals = (((t1 - t0) / sc.dt()).ceil() as usize).max(50) * 2;
    (0..sc.agents)
        .map(|j| {
            let plan = Arc::clone(&prepared.plan);
            let reference: Reference = Arc::new(move |t: f64| plan.position(j, t.clamp(t0, t1)));
            let problem = TrackingProblem::new(sc.q.matrix(), sc.r.matrix(), t0, t1, state[j].x, prepared.waypoints.point(step + 1, j), reference)
                .map_err(|e| SimError::Scenario(e.to_string()))?;
            let gains = solve_gains(&problem, intervals).map_err(|e| SimError::Controller { step: step + 1, time: t0, message: e.to_string() })?;
            Ok(Tracker { gains, held: None })
        })
        .collect()
}

fn control(tracker: &mut Tracker, x: Vec2, t: f64, step: usize) -> Result<Vec2, SimError> {
    control_closed_loop_guarded(&tracker.gains, x, t, &mut tracker.held)
        .map_err(|e| SimError::Controller { step: step + 1, time: t, message: e.to_string() })
}

/// Advances every agent from `a` to `b` (no switching inside).
fn advance(prepared: &Prepared, state: &mut [AgentState], trackers: &mut [Tracker], step: usize, a: f64, b: f64) -> Result<(), SimError> {
    let sc = &prepared.scenario;
    let h = b - a;
    match sc.controller {
        ControllerKind::StopGoStop | ControllerKind::ReparameterizeExact => {
            // open-loop velocity integrated in closed form
            for (j, s) in state.iter_mut().enumerate() {
                s.x += prepared.plan.position(j, b) - prepared.plan.position(j, a);
            }
        }
        ControllerKind::ReparameterizeLq => {
            for (j, s) in state.iter_mut().enumerate() {
                let tr = &mut trackers[j];
                let k1 = control(tr, s.x, a, step)?;
                let k2 = control(tr, s.x + k1 * (0.5 * h), a + 0.5 * h, step)?;
                let k3 = control(tr, s.x + k2 * (0.5 * h), a + 0.5 * h, step)?;
                let k4 = control(tr, s.x + k3 * h, b, step)?;
                s.x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
        }
        ControllerKind::ReparameterizeUnicycle => {
            let kappa = sc.kappa;
            for (j, s) in state.iter_mut().enumerate() {
                let tr = &mut trackers[j];
                let mut f = |x: Vec2, theta: f64, t: f64| -> Result<(Vec2, f64), SimError> {
                    let u = control(tr, x, t, step)?;
                    let (nu, omega) = unicycle_map(u, theta, kappa);
                    Ok((Vec2::new(theta.cos(), theta.sin()) * nu, omega))
                };
                let (x, th) = (s.x, s.theta);
                let (v1, w1) = f(x, th, a)?;
                let (v2, w2) = f(x + v1 * (0.5 * h), th + w1 * 0.5 * h, a + 0.5 * h)?;
                let (v3, w3) = f(x + v2 * (0.5 * h), th + w2 * 0.5 * h, a + 0.5 * h)?;
                let (v4, w4) = f(x + v3 * h, th + w3 * h, b)?;
                s.x += (v1 + v2 * 2.0 + v3 * 2.0 + v4) * (h / 6.0);
                s.theta += (w1 + 2.0 * w2 + 2.0 * w3 + w4) * (h / 6.0);
            }
        }
    }
    Ok(())
}
