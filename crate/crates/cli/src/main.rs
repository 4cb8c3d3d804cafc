use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use braidmix::algebra::{induced_permutation, parse_braid_word, schedule_steps};
use braidmix::controllers::{max_feasible_steps, mixing_limit_upper};
use braidmix::geometry::RegionRect;
use braidmix::sim::{
    emit_outputs, prepare, simulate, verify, ControllerKind, Outcome, Plan, Prepared, Scenario, SimError, Tolerances,
    EXIT_PRECONDITION, EXIT_VERIFICATION_FAILED, EXIT_VERIFIED,
};
use braidmix::tracking::{default_steps, optimal_cost, solve_gains, TrackingProblem};
use braidmix::Vec2;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "braidmix", version, about = "Plan, simulate and verify braid-specified multi-robot mixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schedule a braid and print its braid points and crossings.
    Plan(ScenarioArgs),
    /// Run a scenario and write trajectory.csv, report.json and optionally plot.svg.
    Simulate(ScenarioArgs),
    /// Run a scenario and print the verification report.
    Verify(ScenarioArgs),
    /// Mixing-limit upper bound and Stop-Go-Stop step budget.
    Bound(BoundArgs),
    /// Backward gain sweep for one tracking problem, as CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file. Without it a unit-cell rectangle is built from
    /// --braid and --agents.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    braid: Option<String>,
    #[arg(long)]
    agents: Option<usize>,
    /// stop-go-stop, reparameterize-exact, reparameterize-lq or reparameterize-unicycle.
    #[arg(long)]
    controller: Option<ControllerKind>,
    #[arg(long)]
    dt: Option<f64>,
    /// Also write plot.svg.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    height: Option<f64>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    v_max: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Start state as `x,y`.
    #[arg(long, default_value = "0,0", value_parser = parse_point)]
    from: Vec2,
    /// Target state as `x,y`; the reference moves linearly between the two.
    #[arg(long, default_value = "1,0", value_parser = parse_point)]
    to: Vec2,
    #[arg(long)]
    steps: Option<usize>,
    /// Write gains.csv here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [x, y] => Ok(Vec2::new(x.trim().parse().map_err(|e| format!("{e}"))?, y.trim().parse().map_err(|e| format!("{e}"))?)),
        _ => Err(format!("expected x,y, got `{s}`")),
    }
}

/// Errors carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure { code: e.exit_code() as u8, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn precondition(msg: impl Into<String>) -> Failure {
    SimError::Precondition(msg.into()).into()
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut s = match &args.scenario {
        Some(path) => Scenario::load(path)?,
        None => {
            let braid = args.braid.as_deref().ok_or_else(|| precondition("give --scenario or --braid"))?;
            let n = args.agents.ok_or_else(|| precondition("--braid needs --agents"))?;
            let word = parse_braid_word(braid, n).map_err(|e| precondition(e.to_string()))?;
            let m = schedule_steps(&word, true).map_err(|e| precondition(e.to_string()))?.len().max(1);
            let mut s = Scenario::rect(braid, n, (n.max(2) - 1) as f64, m as f64, 10.0 * m as f64, ControllerKind::ReparameterizeExact, 0.1, 1.0);
            s.name = "command-line".into();
            s
        }
    };
    if let Some(b) = &args.braid {
        s.braid = b.clone();
    }
    if let Some(n) = args.agents {
        s.agents = n;
    }
    if let Some(c) = args.controller {
        s.controller = c;
    }
    if args.dt.is_some() {
        s.dt = args.dt;
    }
    s.validate()?;
    Ok(s)
}

fn plan_json(p: &Prepared) -> serde_json::Value {
    let n = p.scenario.agents;
    let times = p.waypoints.times();
    let points: Vec<Vec<[f64; 2]>> =
        (0..times.len()).map(|i| (0..n).map(|j| [p.waypoints.point(i, j).x, p.waypoints.point(i, j).y]).collect()).collect();
    let crossings: Vec<_> = match &*p.plan {
        Plan::Reparameterized(r) => r
            .crossings()
            .iter()
            .map(|c| {
                json!({
                    "step": c.step,
                    "under": c.under,
                    "over": c.over,
                    "point": [c.info.point.x, c.info.point.y],
                    "angle": c.info.angle,
                    "margin": c.margin,
                    "separation": c.separation,
                })
            })
            .collect(),
        Plan::StopGoStop(_) => Vec::new(),
    };
    let release: Vec<_> = match &*p.plan {
        Plan::StopGoStop(s) => s.steps.iter().map(|st| json!({ "tau": st.tau, "order": st.release_order })).collect(),
        Plan::Reparameterized(_) => Vec::new(),
    };
    json!({
        "braid": p.word.to_string(),
        "steps": p.steps.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        "permutation": induced_permutation(&p.word).image(),
        "times": times,
        "braid_points": points,
        "crossings": crossings,
        "stop_go_stop": release,
        "precondition_flags": p.flags,
    })
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).expect("json") + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn execute(args: &ScenarioArgs) -> Result<Outcome, Failure> {
    let s = load_scenario(args)?;
    let prepared = prepare(&s)?;
    let log = simulate(&prepared)?;
    let report = verify(&log, &prepared, Tolerances::for_prepared(&prepared));
    Ok(Outcome { prepared, log, report })
}

fn verdict_code(o: &Outcome) -> u8 {
    if o.report.verified {
        EXIT_VERIFIED as u8
    } else {
        EXIT_VERIFICATION_FAILED as u8
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Plan(args) => {
            let s = load_scenario(&args)?;
            let p = prepare(&s)?;
            let v = plan_json(&p);
            match &args.out {
                Some(dir) => write_json(dir, "plan.json", &v)?,
                None => println!("{}", serde_json::to_string_pretty(&v).expect("json")),
            }
            Ok(0)
        }
        Command::Simulate(args) => {
            let o = execute(&args)?;
            let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let paths = emit_outputs(&o.log, &o.report, &o.prepared, &dir, args.svg)?;
            let r = &o.report;
            println!(
                "{}: min distance {:.6} (pair {:?} at t={:.4}), max braid-point error {:.3e}, verified {}",
                o.prepared.scenario.name, r.min_distance, r.min_pair, r.min_time, r.max_waypoint_error, r.verified
            );
            println!("wrote {}", paths.csv.display());
            Ok(verdict_code(&o))
        }
        Command::Verify(args) => {
            let o = execute(&args)?;
            if let Some(dir) = &args.out {
                emit_outputs(&o.log, &o.report, &o.prepared, dir, args.svg)?;
            }
            println!("{}", serde_json::to_string_pretty(&o.report).expect("json"));
            Ok(verdict_code(&o))
        }
        Command::Bound(args) => {
            let (mut n, mut region, mut sep, mut v) = (None, None, None, None);
            if let Some(path) = &args.scenario {
                let s = Scenario::load(path)?;
                let p = prepare(&s)?;
                (n, region, sep, v) = (Some(s.agents), Some(p.region), Some(s.separation.max()), Some(s.v_max));
            }
            let n = args.agents.or(n).ok_or_else(|| precondition("--agents is required"))?;
            let need = |name: &str, flag: Option<f64>, from: Option<f64>| flag.or(from).ok_or_else(|| precondition(format!("--{name} is required")));
            let h = need("height", args.height, region.map(|r| r.height))?;
            let l = need("length", args.length, region.map(|r| r.length))?;
            let t = need("duration", args.duration, region.map(|r| r.duration))?;
            let d = need("separation", args.separation, sep)?;
            let v = need("v-max", args.v_max, v)?;
            let bound = mixing_limit_upper(n, h, l, t, d, v).map_err(|e| precondition(e.to_string()))?;
            let region = RegionRect::new(h, l, t).map_err(|e| precondition(e.to_string()))?;
            let sgs = max_feasible_steps(n, &region, d, v, bound.value.clamp(1, 100_000) as usize);
            println!("{}", serde_json::to_string_pretty(&json!({ "mixing_limit": bound, "stop_go_stop_max_steps": sgs })).expect("json"));
            Ok(0)
        }
        Command::Sweep(args) => {
            let (from, to, horizon) = (args.from, args.to, args.horizon);
            let reference = std::sync::Arc::new(move |t: f64| from + (to - from) * (t / horizon));
            let problem = TrackingProblem::isotropic(args.q, args.r, 0.0, horizon, from, to, reference)
                .map_err(|e| precondition(e.to_string()))?;
            let steps = args.steps.unwrap_or_else(|| default_steps(horizon));
            let gains = solve_gains(&problem, steps).map_err(|e| precondition(e.to_string()))?;
            let mut text = String::from("time,h11,h12,h21,h22,k11,k12,k21,k22,g11,g12,g21,g22,e1,e2,d1,d2,phi\n");
            for (i, t) in gains.times().iter().enumerate() {
                let s = gains.node(i);
                let mut row = vec![t.to_string()];
                for m in [s.h, s.k, s.g] {
                    row.extend([m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]].iter().map(f64::to_string));
                }
                row.extend([s.e.x, s.e.y, s.d.x, s.d.y, s.phi].iter().map(f64::to_string));
                text.push_str(&row.join(","));
                text.push('\n');
            }
            match &args.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                    let path = dir.join("gains.csv");
                    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                    println!("optimal cost {}", optimal_cost(&gains));
                }
                None => print!("{text}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_PRECONDITION as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
