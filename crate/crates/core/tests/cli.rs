//! Command-line behaviour: exit codes, determinism and output formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use sha2::{Digest, Sha256};

fn physgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_physgp"))
        .args(args)
        .env_remove("PHYSGP_CONFIG")
        .output()
        .expect("spawn physgp")
}

fn ok(args: &[&str]) {
    let out = physgp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn digest(p: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(p).unwrap()).to_vec()
}

fn data_lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(physgp(&["simulate", "--scenario", "no-such"]).status.code(), Some(2));
    assert_eq!(physgp(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(physgp(&["fit", "--data", s(&path(dir.path(), "missing.csv"))]).status.code(), Some(1));

    let bad_cfg = path(dir.path(), "bad.toml");
    std::fs::write(&bad_cfg, "[anneal]\nn_iters = 0\n").unwrap();
    let out = physgp(&["--config", s(&bad_cfg), "simulate", "--scenario", "null"]);
    assert_eq!(out.status.code(), Some(2));

    let garbage = path(dir.path(), "garbage.csv");
    std::fs::write(&garbage, "not,a,dataset\n1,2\n").unwrap();
    assert_eq!(physgp(&["fit", "--data", s(&garbage)]).status.code(), Some(1));
}

#[test]
fn simulate_is_self_describing_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (path(dir.path(), "a.csv"), path(dir.path(), "b.csv"), path(dir.path(), "c.csv"));
    ok(&["simulate", "--scenario", "ei-drop", "--seed", "7", "--out", s(&a)]);
    ok(&["simulate", "--scenario", "ei-drop", "--seed", "7", "--out", s(&b)]);
    ok(&["simulate", "--scenario", "ei-drop", "--seed", "8", "--out", s(&c)]);
    assert_eq!(digest(&a), digest(&b));
    assert_ne!(digest(&a), digest(&c));
    let text = std::fs::read_to_string(&a).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# physgp-curvature-v1") && first.contains("seed=7") && first.contains("scenario=ei-drop"));
    // One header row, then 100 time points at 3 sensors.
    assert_eq!(data_lines(&a).len(), 1 + 300);

    let strain = path(dir.path(), "s.csv");
    ok(&["simulate", "--scenario", "null", "--format", "strain", "--out", s(&strain)]);
    ok(&["fit", "--data", s(&strain), "--nu", "6"]);
}

#[test]
fn fit_reports_plausible_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "d.csv");
    ok(&["simulate", "--scenario", "sec4.3", "--out", s(&data)]);
    let (f1, f2, f0) = (path(dir.path(), "1.json"), path(dir.path(), "2.json"), path(dir.path(), "0.json"));
    ok(&["fit", "--data", s(&data), "--nu", "6", "--out", s(&f1)]);
    ok(&["fit", "--data", s(&data), "--nu", "6", "--out", s(&f2)]);
    ok(&["fit", "--data", s(&data), "--nu", "0", "--out", s(&f0)]);
    assert_eq!(digest(&f1), digest(&f2));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&f1).unwrap()).unwrap();
    let k = v["theta_hat"]["k"].as_f64().unwrap();
    let ei = v["theta_hat"]["EI"].as_f64().unwrap();
    assert!(k.is_finite() && (10.0..10_000.0).contains(&k), "k {k}");
    assert!(ei.is_finite() && (1e10..1e13).contains(&ei), "EI {ei}");
    let v0: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&f0).unwrap()).unwrap();
    assert_eq!(v0["N_u"].as_u64(), Some(0));
}

#[test]
fn end_to_end_pipeline_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = path(d, "ei.csv");
    let start = Instant::now();
    ok(&["simulate", "--scenario", "ei-drop", "--out", s(&data)]);
    ok(&["fit", "--data", s(&data), "--out", s(&path(d, "fit.json"))]);
    ok(&["tune", "--data", s(&data), "--out", s(&path(d, "tune.csv")), "--summary", s(&path(d, "tune.json"))]);
    ok(&["detect", "--data", s(&data), "--out", s(&path(d, "det.csv"))]);
    assert!(start.elapsed().as_secs_f64() < 60.0, "{:?}", start.elapsed());

    let det = data_lines(&path(d, "det.csv"));
    assert_eq!(det[0], "batch_index,log_ml,p_i,k_hat,EI_hat");
    assert_eq!(det.len(), 1 + 20);
    let tune = data_lines(&path(d, "tune.csv"));
    assert_eq!(tune[0], "N_u,bias2,variance,mse");
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path(d, "tune.json")).unwrap()).unwrap();
    assert!(summary["selected_N_u"].as_u64().is_some());
}

#[test]
fn predict_band_is_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "n.csv");
    let post = path(dir.path(), "p.csv");
    ok(&["simulate", "--scenario", "null", "--out", s(&data)]);
    ok(&["predict", "--data", s(&data), "--points", "21", "--out", s(&post)]);
    let lines = data_lines(&post);
    assert_eq!(lines[0], "x_mm,f_mean,f_var,u_mean,u_var,f_lo95,f_hi95,u_lo95,u_hi95");
    assert_eq!(lines.len(), 1 + 21);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(v[2] >= 0.0 && v[4] >= 0.0);
        assert!(v[5] <= v[1] && v[1] <= v[6]);
        assert!(v[7] <= v[3] && v[3] <= v[8]);
        assert!((v[6] - v[1] - 1.96 * v[2].sqrt()).abs() <= 1e-12 * v[1].abs().max(1e-300) + 1e-20);
    }
}

#[test]
fn roc_smoke_rates_are_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let roc = path(dir.path(), "roc.csv");
    ok(&["roc", "--reps", "10", "--out", s(&roc)]);
    let lines = data_lines(&roc);
    assert_eq!(lines[0], "gamma_multiplier,tpr,fpr");
    let rows: Vec<Vec<f64>> = lines[1..].iter().map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 7);
    // Multipliers increase, so thresholds tighten and both rates fall.
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
        assert!(w[1][1] <= w[0][1] && w[1][2] <= w[0][2]);
    }
    for r in &rows {
        assert!((0.0..=1.0).contains(&r[1]) && (0.0..=1.0).contains(&r[2]));
    }
}

#[test]
fn config_file_and_environment_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "run.toml");
    std::fs::write(&cfg, "[simulation]\nn_points = 40\nchange_at = 20\n").unwrap();
    let (a, b) = (path(dir.path(), "a.csv"), path(dir.path(), "b.csv"));
    ok(&["--config", s(&cfg), "simulate", "--scenario", "null", "--out", s(&a)]);
    assert_eq!(data_lines(&a).len(), 1 + 120);
    let out = Command::new(env!("CARGO_BIN_EXE_physgp"))
        .args(["simulate", "--scenario", "null", "--out", s(&b)])
        .env("PHYSGP_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(digest(&a), digest(&b));
}
