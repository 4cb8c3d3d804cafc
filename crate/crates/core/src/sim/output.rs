use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::Vec2;

use super::engine::{Prepared, TrajectoryLog};
use super::verify::VerificationReport;
use super::SimError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Writes the trajectory table: `time`, then `x_j, y_j` (and `theta_j` for
/// unicycles) per agent, at full round-trip precision.
pub fn write_csv<W: Write>(log: &TrajectoryLog, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_heading = log.headings.is_some();
    let mut header = vec!["time".to_string()];
    for j in 0..log.agents {
        header.push(format!("x{j}"));
        header.push(format!("y{j}"));
        if with_heading {
            header.push(format!("theta{j}"));
        }
    }
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (k, t) in log.times.iter().enumerate() {
        record.clear();
        record.push(t.to_string());
        for j in 0..log.agents {
            let p = log.positions[k][j];
            record.push(p.x.to_string());
            record.push(p.y.to_string());
            if let Some(h) = &log.headings {
                record.push(h[k][j].to_string());
            }
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// SVG overlay of strand geometry and realized trajectories: one
/// `<polyline class="strand">` per agent per step and one
/// `<polyline class="trajectory">` per agent.
pub fn render_svg(log: &TrajectoryLog, prepared: &Prepared) -> String {
    let n = log.agents;
    let times = prepared.waypoints.times();
    let mut strands: Vec<Vec<Vec2>> = Vec::new();
    for i in 1..times.len() {
        for j in 0..n {
            strands.push((0..=32).map(|s| prepared.plan.position(j, times[i - 1] + (times[i] - times[i - 1]) * s as f64 / 32.0)).collect());
        }
    }
    let stride = (log.times.len() / 2000).max(1);
    let trajectories: Vec<Vec<Vec2>> = (0..n)
        .map(|j| log.positions.iter().step_by(stride).chain(log.positions.last()).map(|row| row[j]).collect())
        .collect();

    let all = strands.iter().chain(&trajectories).flatten();
    let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
    for p in all {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if !lo.x.is_finite() {
        (lo, hi) = (Vec2::zeros(), Vec2::repeat(1.0));
    }
    let pad = 0.05 * (hi - lo).max().max(1e-9);
    let (w, h) = (hi.x - lo.x + 2.0 * pad, hi.y - lo.y + 2.0 * pad);
    let stroke = 0.003 * w.max(h);
    let palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}">"#, lo.x - pad, -(hi.y + pad), w, h);
    let _ = writeln!(svg, r#"<g transform="scale(1,-1)" fill="none">"#);
    let points = |pts: &[Vec2]| pts.iter().map(|p| format!("{:.6},{:.6}", p.x, p.y)).collect::<Vec<_>>().join(" ");
    for (s, pts) in strands.iter().enumerate() {
        let _ = writeln!(
            svg,
            r##"<polyline class="strand" data-step="{}" data-agent="{}" stroke="#bbbbbb" stroke-width="{stroke}" stroke-dasharray="{} {}" points="{}"/>"##,
            s / n + 1,
            s % n,
            3.0 * stroke,
            2.0 * stroke,
            points(pts)
        );
    }
    for (j, pts) in trajectories.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<polyline class="trajectory" data-agent="{j}" stroke="{}" stroke-width="{}" points="{}"/>"#,
            palette[j % palette.len()],
            1.5 * stroke,
            points(pts)
        );
    }
    for j in 0..n {
        for i in 0..times.len() {
            let p = prepared.waypoints.point(i, j);
            let _ = writeln!(svg, r##"<circle class="braid-point" cx="{:.6}" cy="{:.6}" r="{}" fill="#333333"/>"##, p.x, p.y, 1.5 * stroke);
        }
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

/// Files written by [`emit_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub report: PathBuf,
    pub svg: Option<PathBuf>,
}

/// Writes `trajectory.csv`, `report.json` and optionally `plot.svg` into
/// `dir`, creating it if needed.
pub fn emit_outputs(
    log: &TrajectoryLog,
    report: &VerificationReport,
    prepared: &Prepared,
    dir: &Path,
    svg: bool,
) -> Result<OutputPaths, SimError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let csv_path = dir.join("trajectory.csv");
    let file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    write_csv(log, std::io::BufWriter::new(file)).map_err(|e| io_err(&csv_path, e))?;

    let report_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).expect("reports serialize");
    fs::write(&report_path, json + "\n").map_err(|e| io_err(&report_path, e))?;

    let svg_path = if svg {
        let p = dir.join("plot.svg");
        fs::write(&p, render_svg(log, prepared)).map_err(|e| io_err(&p, e))?;
        Some(p)
    } else {
        None
    };
    Ok(OutputPaths { csv: csv_path, report: report_path, svg: svg_path })
}
