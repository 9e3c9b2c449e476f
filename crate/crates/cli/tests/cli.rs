use std::path::Path;
use std::process::{Command, Output};

use hcto::copt::{build_copt, ContactSchedule, Relaxation};
use hcto::kopt::KinematicsSolution;
use hcto::milp::read_lp;
use hcto::scenarios::{pivot, resting_box, BOX_H, BOX_W};
use hcto::scene::WorkspaceGate;
use hcto::{Pose, Scenario, Vec2};
use hcto_cli::relaxation_from_flags;
use tempfile::TempDir;

fn hcto(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcto")).args(args).current_dir(dir).output().unwrap()
}

fn write_scenario(dir: &Path, name: &str, s: &Scenario) {
    std::fs::write(dir.join(name), s.to_json_string()).unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pivot_run_writes_three_files() {
    let dir = TempDir::new().unwrap();
    write_scenario(dir.path(), "pivot.json", &pivot(6));
    let o = hcto(&["run", "pivot.json", "--out", "res", "--relaxation", "encoded:4", "--snapshots", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let res = dir.path().join("res");
    for f in ["trajectory.json", "metrics.json", "snapshots.svg"] {
        assert!(res.join(f).is_file(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(res.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["success"], true);
    assert_eq!(m["relaxation"], "encoded:4");
    let tr = hcto::qopt::Trajectory::from_json(&std::fs::read_to_string(res.join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(tr.steps(), 7);
    let svg = std::fs::read_to_string(res.join("snapshots.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="snapshot""#).count(), 4);
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let o = hcto(&["run", "nowhere.json", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.json"));
    assert!(!dir.path().join("res/metrics.json").exists());
}

#[test]
fn malformed_scenario_gets_a_schema_diagnostic() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"name": "x", "object": {"mass": 1.0}}"#).unwrap();
    let o = hcto(&["run", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("schema") && e.contains("vertices"), "{e}");
}

/// Box tipped onto a corner with its weight off the support and the robot
/// barred from every step.
fn on_corner() -> Scenario {
    let mut s = resting_box(2);
    let corner = Vec2::new(-BOX_W / 2.0, -BOX_H / 2.0);
    let r = corner.norm();
    let a = (0.01 / r).asin();
    let theta = -std::f64::consts::FRAC_PI_2 - a - corner.y.atan2(corner.x);
    s.q_start = Pose::new(0.0, r * a.cos(), theta);
    s.q_goal = s.q_start;
    s.robots[0].workspace_gates.push(WorkspaceGate { coeffs: None, rhs: 0.0, steps: vec![0, 1, 2] });
    s
}

#[test]
fn infeasible_scenario_exits_two_with_metrics() {
    let dir = TempDir::new().unwrap();
    write_scenario(dir.path(), "corner.json", &on_corner());
    let o = hcto(&["run", "corner.json", "--out", "res", "--relaxation", "mccormick", "--max-cuts", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let res = dir.path().join("res");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(res.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["success"], false);
    assert!(m["failure"].as_str().is_some());
    assert!(!res.join("trajectory.json").exists());
    assert!(!res.join("snapshots.svg").exists());
}

#[test]
fn metrics_agree_with_checkpoints() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"relaxation": {"BinaryEncoded": 2}, "inject_rejections": 1}"#).unwrap();
    let o = hcto(&["run", "--builtin", "two-arm-pivot", "--horizon", "4", "--config", "cfg.json", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let res = dir.path().join("res");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(res.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["metrics"]["a3_cuts"], 1);
    assert_eq!(m["schedules"], 2);
    let first = ContactSchedule::from_json(&std::fs::read_to_string(res.join("checkpoints/schedule_0.json")).unwrap()).unwrap();
    let cut: Vec<(usize, usize, usize)> = serde_json::from_value(m["cuts_applied"][0].clone()).unwrap();
    assert_eq!(cut, first.active_set());
    assert!(res.join("checkpoints/schedule_1.json").is_file());
    assert!(!res.join("checkpoints/schedule_2.json").exists());
    // stage timings add up to no more than the total
    let t = &m["timings"];
    let sum = t["kopt"].as_f64().unwrap()
        + ["copt", "qopt"].iter().flat_map(|k| t[*k].as_array().unwrap()).map(|v| v.as_f64().unwrap()).sum::<f64>();
    assert!(sum <= m["metrics"]["a1_total_seconds"].as_f64().unwrap() + 1e-9);
}

#[test]
fn export_lp_from_checkpoint_round_trips() {
    let dir = TempDir::new().unwrap();
    let o = hcto(&["run", "--builtin", "pivot", "--horizon", "4", "--relaxation", "mccormick", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = hcto(
        &["export-lp", "--builtin", "pivot", "--horizon", "4", "--bits", "2", "--kin", "res/checkpoints/kin.json", "-o", "m.lp"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model = read_lp(&std::fs::read_to_string(dir.path().join("m.lp")).unwrap()).unwrap();
    let kin = KinematicsSolution::from_json(&std::fs::read_to_string(dir.path().join("res/checkpoints/kin.json")).unwrap())
        .unwrap();
    let direct = build_copt(&pivot(4), &kin, Relaxation::BinaryEncoded(4)).unwrap();
    assert_eq!(model.num_binaries(), direct.model.num_binaries());
    assert_eq!(model.vars().len(), direct.model.vars().len());
    assert_eq!(model.constraints().len(), direct.model.constraints().len());
}

#[test]
fn render_and_scenario_commands() {
    let dir = TempDir::new().unwrap();
    let o = hcto(&["scenario", "resting", "--horizon", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = Scenario::from_json_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(s, resting_box(3));
    assert_eq!(hcto(&["scenario", "juggling"], dir.path()).status.code(), Some(1));

    write_scenario(dir.path(), "rest.json", &s);
    assert_eq!(hcto(&["run", "rest.json", "--out", "res", "--relaxation", "mccormick"], dir.path()).status.code(), Some(0));
    let o = hcto(&["render", "rest.json", "--trajectory", "res/trajectory.json", "--snapshots", "1", "-o", "one.svg"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = std::fs::read_to_string(dir.path().join("one.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="snapshot""#).count(), 1);
    assert!(svg.contains(r#"data-step="3""#));
    let o = hcto(&["render", "rest.json", "--trajectory", "res/missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn relaxation_flags() {
    assert_eq!(relaxation_from_flags("mccormick", None, None).unwrap(), Relaxation::McCormick);
    assert_eq!(relaxation_from_flags("encoded", None, Some(3)).unwrap(), Relaxation::BinaryEncoded(8));
    assert_eq!(relaxation_from_flags("naive", Some(5), None).unwrap(), Relaxation::NaivePiecewise(5));
    assert_eq!(relaxation_from_flags("encoded:16", None, None).unwrap(), Relaxation::BinaryEncoded(16));
    assert_eq!(relaxation_from_flags("encoded", None, None).unwrap(), Relaxation::BinaryEncoded(8));
    assert!(relaxation_from_flags("encoded:4", Some(2), None).is_err());
    assert!(relaxation_from_flags("encoded", Some(4), Some(2)).is_err());
    assert!(relaxation_from_flags("simplex", None, None).is_err());
}
