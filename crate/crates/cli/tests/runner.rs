use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;

use heatlab_cli::config::{ExperimentConfig, Task};
use heatlab_cli::runner::{run, TaskStatus};
use serde_json::Value;

fn ou_config(out: &Path) -> String {
    format!(
        r#"{{
  "operator": {{"name": "ou_1d"}},
  "grid": {{"dim": 1, "half_width": 6.0, "spacing": 0.1, "radii": [2.0, 4.0, 6.0]}},
  "time": {{"step": 0.005, "t_max": 10.0}},
  "tasks": ["limit", "classify", "abelian", "exterior_mass", "heat_content", "capacitory", "cesaro"],
  "probes": [[0.0], [1.5]],
  "output": {:?}
}}"#,
        out
    )
}

fn heatlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heatlab"))
}

#[test]
fn ou_suite_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(&ou_config(dir.path())).unwrap();
    let report = run(&cfg).unwrap();
    assert_eq!(report.exit_code(), 0);
    // config order is kept although classify runs first
    assert_eq!(report.tasks[0].task, Task::Limit);
    assert!(report.tasks.iter().all(|t| t.status == TaskStatus::Completed));

    let classify = report.task(Task::Classify).unwrap();
    assert_eq!(classify.verdict.as_deref(), Some("PositiveCritical"));

    let limit = &report.task(Task::Limit).unwrap().result.as_ref().unwrap()[0];
    let f = limit["extrapolated"].as_f64().unwrap();
    assert!((f - 1.0 / (2.0 * PI).sqrt()).abs() <= 0.02 / (2.0 * PI).sqrt(), "{f}");
    assert_eq!(limit["verdict"], "matches");

    let ext = &report.task(Task::ExteriorMass).unwrap().result.as_ref().unwrap()[0];
    let tail = libm::erfc(2f64.sqrt());
    let m = ext["curve"]["values"].as_array().unwrap().last().unwrap().as_f64().unwrap();
    assert!((m - tail).abs() <= 0.2 * tail, "{m} vs {tail}");

    // the origin lies in the unit ball
    assert!(report.warnings.iter().any(|w| w.contains("lies in the ball")));
    for a in &report.tasks.iter().flat_map(|t| t.artifacts.clone()).collect::<Vec<_>>() {
        assert!(dir.path().join(a).is_file(), "{a}");
    }
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(saved["tasks"].as_array().unwrap().len(), 7);
}

#[test]
fn runs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut cfg = ExperimentConfig::from_json(&ou_config(dir.path())).unwrap();
        cfg.tasks = vec![Task::Classify, Task::Limit, Task::Capacitory];
        run(&cfg).unwrap();
    }
    for name in ["limit_probe0_level2.csv", "capacitory_probe0_level2.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn empty_tasks_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let text = ou_config(&dir.path().join("out")).replace(
        r#"["limit", "classify", "abelian", "exterior_mass", "heat_content", "capacitory", "cesaro"]"#,
        "[]",
    );
    fs::write(&path, text).unwrap();
    let out = heatlab().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tasks"));
}

#[test]
fn bad_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, ou_config(dir.path()).replace(r#""spacing": 0.1"#, r#""spacing": "fine""#)).unwrap();
    let out = heatlab().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.spacing"));
}

#[test]
fn override_and_out_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, ou_config(&dir.path().join("ignored"))).unwrap();
    let out_dir = dir.path().join("elsewhere");
    let status = heatlab()
        .args(["run", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .args(["--override", "tolerances.exterior_mass=0.25"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["tolerances"]["exterior_mass"], 0.25);
    assert!(!dir.path().join("ignored").exists());

    let bad = heatlab().args(["run", path.to_str().unwrap(), "--override", "grid.spacing=0.2"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn failing_task_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    // a box of radius 6 cannot hold the Laplacian kernel up to t = 10
    let text = ou_config(dir.path())
        .replace(r#""name": "ou_1d""#, r#""name": "laplacian_1d""#)
        .replace(
            r#"["limit", "classify", "abelian", "exterior_mass", "heat_content", "capacitory", "cesaro"]"#,
            r#"["limit"]"#,
        );
    fs::write(&path, text).unwrap();
    let out = heatlab().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tasks"][0]["status"], "errored");
    assert!(report["tasks"][0]["error"].as_str().unwrap().contains("domain too small"));
}

#[test]
fn catalog_lists_builtins() {
    let out = heatlab().arg("catalog").output().unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["laplacian_1d", "laplacian_2d", "ou_1d", "drifted_bm_1d", "tabulated"]);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
