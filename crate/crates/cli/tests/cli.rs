use std::path::Path;
use std::process::{Command, Output};

use cvxq::harness::presets;

fn cvxq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvxq"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CVXQ_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cvxq(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(cvxq(&[], dir.path()).status.code(), Some(2));
}

#[test]
fn train_twice_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = presets::grid();
    cfg.episodes = 2;
    cfg.episode_cap = 80;
    std::fs::write(dir.path().join("c.json"), cfg.to_json()).unwrap();
    for out in ["a", "b"] {
        let o = cvxq(&["train", "--config", "c.json", "--seed", "7", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["metrics.csv", "theta.bin", "theta.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let o = cvxq(&["validate", "--config", "c.json", "--theta", "a/theta.bin"], dir.path());
    assert!(o.status.success());
    assert!(json(&o)["reward"].as_f64().unwrap() < 0.0);
}

#[test]
fn multi_run_train_writes_percentiles() {
    let dir = tempfile::tempdir().unwrap();
    let o = cvxq(&["train", "--preset", "grid", "--runs", "2", "--episodes", "1", "--out", "m"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = std::fs::read_to_string(dir.path().join("m/percentiles.csv")).unwrap();
    assert_eq!(p.lines().count(), 2);
    assert!(dir.path().join("m/seed_0/metrics.csv").exists());
    assert!(dir.path().join("m/seed_1/theta.json").exists());
}

#[test]
fn dual_audit_on_grid_has_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = cvxq(&["dual-audit", "--out", "audit"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&o);
    assert_eq!(report["passed"], true);
    assert_eq!(report["slackness"]["violations"].as_array().unwrap().len(), 0);
    assert!(dir.path().join("audit/dual_audit.json").exists());
}

#[test]
fn bad_config_exits_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"name\": \"x\"}").unwrap();
    let o = cvxq(&["train", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = cvxq(&["train", "--preset", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = cvxq(&["validate", "--preset", "grid", "--theta", "missing.bin"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn diagnose_reports_full_rank_on_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = cvxq(&["diagnose", "--preset", "grid", "--episodes", "1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["covariance"]["rank"], 35);
    assert_eq!(r["boundedness"]["verdict"], "bounded");
}

#[test]
fn lqr_compare_emits_both_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = cvxq(&["lqr-compare", "--episodes", "3", "--iterations", "2000", "--out", "lqr"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["watkins"].as_array().unwrap().len(), 2);
    for f in ["convex_trace.csv", "watkins_oracle.csv", "watkins_large_theta2.csv", "comparison.json"] {
        assert!(dir.path().join("lqr").join(f).exists(), "{f}");
    }
}
