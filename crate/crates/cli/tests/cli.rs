use std::path::PathBuf;
use std::process::{Command, Output};

fn braidmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_braidmix")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = braidmix(&["simulate", "--scenario", &scenario("stop_go_stop.json"), "--out", out, "--svg"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("time,x0,y0,x1,y1,x2,y2,x3,y3\n"));
    assert!(dir.path().join("plot.svg").exists());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verified"], true);
}

#[test]
fn reruns_write_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = braidmix(&["simulate", "--scenario", &scenario("lq_city_block.json"), "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(a.path().join("trajectory.csv")).unwrap(), std::fs::read(b.path().join("trajectory.csv")).unwrap());
}

#[test]
fn failed_verification_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(scenario("lq_city_block.json")).unwrap()).unwrap();
    s["waypoint_tolerance"] = serde_json::json!(1e-15);
    let path = dir.path().join("strict.json");
    std::fs::write(&path, s.to_string()).unwrap();
    let o = braidmix(&["verify", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["braid_point_feasible"], false);
    assert_eq!(report["collision_free"], true);
}

#[test]
fn precondition_errors_exit_three() {
    assert_eq!(braidmix(&["plan", "--braid", "s1.s3", "--agents", "3"]).status.code(), Some(3));
    assert_eq!(braidmix(&["plan", "--braid", "{s1.s2}", "--agents", "3"]).status.code(), Some(3));
    assert_eq!(braidmix(&["simulate", "--bogus"]).status.code(), Some(3));
    assert_eq!(braidmix(&["verify", "--scenario", "/nonexistent/scenario.json"]).status.code(), Some(1));
}

#[test]
fn command_line_braid_with_overrides() {
    let o = braidmix(&["verify", "--braid", "s1.S2.s1", "--agents", "3", "--controller", "reparameterize-lq", "--dt", "0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["controller"], "reparameterize-lq");
    assert_eq!(report["steps"], 3);
}

#[test]
fn plan_lists_crossings() {
    let o = braidmix(&["plan", "--braid", "{s1.s3}.s2", "--agents", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let plan: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(plan["crossings"].as_array().unwrap().len(), 3);
    assert_eq!(plan["times"].as_array().unwrap().len(), 3);
}

#[test]
fn bound_spot_value() {
    let o = braidmix(&["bound", "--agents", "2", "--height", "4", "--length", "2", "--duration", "10", "--separation", "0.13", "--v-max", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["mixing_limit"]["value"], 3);
    let o = braidmix(&["bound", "--scenario", &scenario("six_robot_unicycle.json")]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn sweep_prints_gain_table() {
    let o = braidmix(&["sweep", "--steps", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 102);
    assert!(lines[0].starts_with("time,h11"));
    let h11: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((h11 - 1f64.tanh()).abs() < 1e-6);
}
