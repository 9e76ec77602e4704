use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn minent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minent")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = minent(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn simulate(dir: &Path, spec: &str, extra: &[&str]) -> String {
    let path = dir.join("bits.bin");
    let path = path.to_str().unwrap().to_string();
    let mut args = vec!["simulate", spec, "--out", &path];
    args.extend_from_slice(extra);
    let out = minent(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn fair_coin_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let file = simulate(dir.path(), "bms:p=0.5", &["--seed", "12", "--blocks", "1000000"]);
    assert_eq!(fs::metadata(&file).unwrap().len(), 6_000_000 / 8);

    let collision = ok_json(&["estimate", &file, "--estimator", "collision"]);
    let per_bit = collision["per_bit"].as_f64().unwrap();
    assert!((0.95..=1.0).contains(&per_bit), "{per_bit}");
    assert_eq!(collision["init_blocks"], 1);

    let compression =
        ok_json(&["estimate", &file, "--estimator", "compression"])["per_bit"].as_f64().unwrap();
    let coron = ok_json(&["estimate", &file, "--estimator", "coron"])["per_bit"].as_f64().unwrap();
    assert!((compression - coron).abs() < 0.02, "{compression} vs {coron}");

    let kim = ok_json(&["estimate", &file, "--estimator", "kim", "--alpha", "3", "--no-ci", "-Q", "2000"]);
    assert_eq!(kim["ci_applied"], false);
    assert_eq!(kim["init_blocks"], 2000);
    assert_eq!(kim["alpha"], 3.0);
}

#[test]
fn sidecar_records_source() {
    let dir = tempfile::tempdir().unwrap();
    let file = simulate(dir.path(), "markov:p=0.2", &["--seed", "5", "--blocks", "40", "--format", "text"]);
    let text = fs::read_to_string(&file).unwrap();
    assert_eq!(text.trim().len(), 240);
    let meta: Value = serde_json::from_str(&fs::read_to_string(format!("{file}.json")).unwrap()).unwrap();
    assert_eq!(meta["family"], "markov");
    assert_eq!(meta["p"], 0.2);
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["rng"], "chacha8");
    assert_eq!(meta["derivation"], "brute_force");
    let h = meta["true_min_entropy"].as_f64().unwrap();
    assert!((h - (-(0.5 * 0.8f64.powi(5)).log2() / 6.0)).abs() < 1e-12);

    // Same seed, same bytes.
    let again = dir.path().join("again.txt");
    let out = minent(&[
        "simulate",
        "markov:p=0.2",
        "--seed",
        "5",
        "--blocks",
        "40",
        "--format",
        "text",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(again).unwrap(), text);
}

#[test]
fn exit_codes() {
    assert_eq!(minent(&["estimate", "x", "--estimator", "coron", "--bogus"]).status.code(), Some(2));
    assert_eq!(minent(&["estimate", "x", "--estimator", "nope"]).status.code(), Some(2));
    assert_eq!(minent(&["frobnicate"]).status.code(), Some(2));
    let missing = minent(&["estimate", "/definitely/not/here", "--estimator", "coron"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.bin");
    let bad = minent(&["simulate", "bms:p=1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    // 7 blocks of 6 bits do not fill whole bytes.
    let partial = minent(&["simulate", "bms:p=0.5", "--blocks", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(partial.status.code(), Some(1));
    let kim = minent(&["estimate", "x", "--estimator", "kim"]);
    assert_eq!(kim.status.code(), Some(1));
}

const CONFIG: &str = r#"
base_seed = 99
n_blocks = 5000
record_timing = false

[[sources]]
family = "near_uniform"
params = [0.25]
trials = 1

[[estimators]]
kind = "compression"
[[estimators]]
kind = "coron"
[[estimators]]
kind = "kim"
alpha = 3
[[estimators]]
kind = "collision"
"#;

#[test]
fn evaluate_writes_one_row_per_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = minent(&["evaluate", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("a");
    let b = run("b");
    let report = fs::read_to_string(a.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "family,param,seed,true_h,estimator,alpha,K,estimate,solved,ci_applied,wall_ms");
    assert_eq!(lines.len(), 1 + 4);
    let estimators: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(estimators, ["compression", "coron", "kim", "collision"]);
    assert_eq!(report, fs::read_to_string(b.join("report.csv")).unwrap());

    let agg = fs::read_to_string(a.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("family,param,estimator,N,mse,mpe_pct,na_count\n"));
    assert_eq!(agg.lines().count(), 5);
    let meta: Value = serde_json::from_str(&fs::read_to_string(a.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["rng"], "chacha8");
}

#[test]
fn evaluate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, CONFIG.replace("params = [0.25]", "params = [2.0]")).unwrap();
    let out = minent(&["evaluate", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn online_streams_from_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_minent"))
        .args(["online", "-", "--emit-every", "2", "--track-indices", "-L", "2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // Blocks 3 3 0 0 0 1 1 (2 bits each).
    child.stdin.take().unwrap().write_all(b"11 11 00 00 00 01 01\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows[0], "k,p_c,theta,per_bit_estimate");
    let ks: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["2", "4", "6", "7"]);
    let last: Vec<f64> = rows[rows.len() - 1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[1], 4.0 / 7.0);
    let indices: Vec<&str> = std::str::from_utf8(&out.stderr).unwrap().lines().collect();
    assert_eq!(indices, ["2", "4", "5", "7"]);
}

#[test]
fn analyze_curves() {
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_string();

    let jr = path("jr.csv");
    assert!(minent(&["analyze", "joint-range", "--statistic", "shannon", "--points", "200", "--out", &jr])
        .status
        .success());
    let text = fs::read_to_string(&jr).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,h_lower,h_upper,gap"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r[3] >= -1e-9));

    let maurer = path("m.csv");
    assert!(minent(&["analyze", "joint-range", "--statistic", "maurer", "--points", "50", "--out", &maurer])
        .status
        .success());

    let slope = path("slope.csv");
    assert!(minent(&["analyze", "slope", "--alpha", "2,3", "--points", "11", "--out", &slope])
        .status
        .success());
    let text = fs::read_to_string(&slope).unwrap();
    assert!(text.starts_with("theta,alpha,z\n"));
    assert_eq!(text.lines().count(), 1 + 22);

    let var = path("var.csv");
    assert!(minent(&["analyze", "variance", "--alpha", "2,3", "--points", "5", "--out", &var])
        .status
        .success());
    let text = fs::read_to_string(&var).unwrap();
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    // theta = 1/64 is the uniform law.
    assert_eq!(first[1], "2");
    assert!((first[2].parse::<f64>().unwrap() - 63.0 / 4096.0).abs() < 1e-12);
}
