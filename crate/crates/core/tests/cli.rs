use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn diffest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffest")).args(args).output().expect("failed to run diffest")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is not JSON")
}

fn simulate_to(path: &Path, n: &str, seed: &str) {
    let out = diffest(&["simulate", "--n", n, "--seed", seed, "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_writes_csv_with_header_and_n_plus_one_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    simulate_to(&path, "500", "3");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,time,value"));
    assert_eq!(lines.count(), 501);
}

#[test]
fn simulate_is_deterministic_in_the_seed() {
    let a = diffest(&["simulate", "--n", "200", "--seed", "9"]);
    let b = diffest(&["simulate", "--n", "200", "--seed", "9"]);
    let c = diffest(&["simulate", "--n", "200", "--seed", "10"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn estimate_reports_estimate_and_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    simulate_to(&path, "4000", "3");
    let out = diffest(&[
        "estimate",
        "--estimator",
        "quad-exact-efficient",
        "--data",
        path.to_str().unwrap(),
        "--start",
        "0.5,0.5",
    ]);
    let json = stdout_json(&out);
    assert_eq!(json["converged"], Value::Bool(true));
    let beta = json["theta_hat"]["beta"].as_f64().unwrap();
    assert!((beta - 1.0).abs() < 0.1, "beta_hat = {beta}");
    assert!(json["se_alpha"].as_f64().unwrap() > 0.0);
    assert!(json["se_beta"].as_f64().unwrap() > 0.0);
    assert_eq!(json["covariance"]["mode"], Value::String("rate-optimal".into()));
}

#[test]
fn estimate_rejects_unknown_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    simulate_to(&path, "100", "1");
    let out = diffest(&["estimate", "--estimator", "nope", "--data", path.to_str().unwrap(), "--start", "1,1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn check_flags_the_non_rate_control() {
    let out = diffest(&["check", "--estimator", "non-rate-control"]);
    let json = stdout_json(&out);
    let rate = json["rate_optimality"].as_array().unwrap();
    assert_eq!(rate[0]["condition"], Value::String("jacobsen".into()));
    assert_eq!(rate[0]["pass"], Value::Bool(false));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));

    let json = stdout_json(&diffest(&["check", "--estimator", "gh-quadratic"]));
    for group in ["rate_optimality", "efficiency"] {
        for report in json[group].as_array().unwrap() {
            assert_eq!(report["pass"], Value::Bool(true), "{report}");
        }
    }
}

#[test]
fn asymptotics_reproduces_the_ou_bound() {
    let json = stdout_json(&diffest(&["asymptotics", "--estimator", "euler"]));
    let bound = &json["sigma_bound"];
    assert!((bound[0][0].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((bound[1][1].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!((json["W2"].as_f64().unwrap() - 2.0).abs() < 1e-6);
}

fn write_config(dir: &Path, replications: usize) -> String {
    let path = dir.join("config.json");
    fs::write(
        &path,
        format!(
            r#"{{"model": {{"name": "ou"}}, "theta0": {{"alpha": 1.0, "beta": 1.0}},
                "estimator": "quad-exact-efficient", "n": 1000, "replications": {replications},
                "master_seed": 5, "solver": {{"perturb": false}}}}"#
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn mc_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 20);
    let out_dir = dir.path().join("out");
    let out = diffest(&["mc", "--config", &config, "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let records = fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 21);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["M"], Value::from(20));
}

#[test]
fn mc_assert_exits_with_status_two_when_thresholds_fail() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 20);
    let out_dir = dir.path().join("out");
    let out = diffest(&[
        "mc",
        "--config",
        &config,
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--assert",
        "--rel-tol",
        "1e-9",
        "--max-corr",
        "1e-9",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mc_rejects_unknown_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"model": {"name": "ou"}, "theta0": {"alpha": 1.0, "beta": 1.0}, "estimator": "euler",
            "n": 100, "replications": 2, "master_seed": 1, "bogus": 3}"#,
    )
    .unwrap();
    let out = diffest(&["mc", "--config", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
