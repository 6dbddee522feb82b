use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[grid]
half_width = 8.0
n_points = 161
[time]
horizon = 0.5
dt = 5e-3
[solver]
n_modes = 32
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hartree-control"));
    for var in ["HARTREE_CONTROL_CONFIG", "HARTREE_CONTROL_OUT", "HARTREE_CONTROL_SEED", "HARTREE_CONTROL_THREADS"] {
        c.env_remove(var);
    }
    c
}

fn run(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut c = bin();
    if let Some(text) = config {
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        c.arg("--config").arg(path);
    }
    c.arg("--out").arg(dir.join("out")).args(args).output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn basis_lists_eigenvalues_with_airy_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), None, &["basis", "--n", "6"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = lines(&dir.path().join("out/basis.csv"));
    assert_eq!(rows[0], "index,eigenvalue,parity,airy_eigenvalue,abs_error");
    assert_eq!(rows.len(), 7);
    assert!(rows[2].contains(",odd,"));
    let m = manifest(dir.path());
    assert_eq!(m["command"], "basis");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["basis"]["n"], 6);
    assert_eq!(m["artifacts"], serde_json::json!(["basis.csv"]));
    assert!(m["summary"]["max_abs_error_vs_airy"].as_f64().unwrap() < 0.05);
}

#[test]
fn control_writes_trajectories_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), Some(SMALL), &["control"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["summary"]["converged"], true);
    assert!(m["summary"]["relative_target_error"].as_f64().unwrap() < 1e-6);
    assert!(m["summary"]["observability"].as_f64().unwrap() > 0.0);
    // 101 time nodes of 161 points plus the header
    assert_eq!(lines(&dir.path().join("out/state.csv")).len(), 101 * 161 + 1);
    assert_eq!(lines(&dir.path().join("out/control.csv")).len(), 101 * 161 + 1);
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/control_summary.json")).unwrap()).unwrap();
    assert_eq!(summary, m["summary"]);
}

#[test]
fn unconverged_control_exits_two_and_keeps_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}cg_max_iter = 2\ncg_tol = 1e-14\n");
    let out = run(dir.path(), Some(&cfg), &["control"]);
    assert_eq!(out.status.code(), Some(2));
    let m = manifest(dir.path());
    assert_eq!(m["status"], "numerical_failure");
    assert_eq!(m["summary"]["cg_iterations"], 2);
    assert!(dir.path().join("out/state.csv").exists());
}

#[test]
fn invalid_config_exits_one_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in ["[grid]\nn_points = 400\n", "[potential]\nkind = \"abs_value\"\nslope = 2.0\n", "mystery = 1\n"] {
        let out = run(dir.path(), Some(cfg), &["evolve"]);
        assert_eq!(out.status.code(), Some(1), "{cfg}");
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
        assert!(!dir.path().join("out").exists(), "{cfg}");
    }
}

#[test]
fn failing_run_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), None, &["verify", "--suite", "spectral", "--suite", "no_such_suite"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn existing_output_directory_keeps_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    std::fs::create_dir(&out_dir).unwrap();
    std::fs::write(out_dir.join("notes.txt"), "mine").unwrap();
    let out = run(dir.path(), None, &["verify", "--suite", "no_such_suite"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(out_dir.join("notes.txt")).unwrap(), "mine");
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("HARTREE_CONTROL_SEED", "77")
        .env("HARTREE_CONTROL_OUT", dir.path().join("out"))
        .args(["verify", "--suite", "hartree"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["seed"], 77);
    assert_eq!(m["summary"]["failures"], 0);
    let rows = lines(&dir.path().join("out/verify.csv"));
    assert_eq!(rows[0], "suite,check,value,relation,threshold,pass");
    assert!(rows[1..].iter().all(|r| r.starts_with("hartree,") && r.ends_with(",true")));
}

#[test]
fn zero_threads_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), None, &["--threads", "0", "basis"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn scaling_scan_reports_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), None, &["scaling-scan"]);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(dir.path());
    let slope = m["summary"]["remainder_slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() < 0.3);
    assert_eq!(lines(&dir.path().join("out/scaling.csv")).len(), 4);
}

#[test]
fn evolve_conserves_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), Some(SMALL), &["evolve"]);
    assert_eq!(out.status.code(), Some(0));
    let drift = manifest(dir.path())["summary"]["max_mass_drift"].as_f64().unwrap();
    assert!(drift < 1e-14);
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["basis", "evolve", "control", "control-nonlinear", "noncontrol-scan", "scaling-scan", "verify"] {
        assert!(text.contains(sub), "{sub}");
    }
}
