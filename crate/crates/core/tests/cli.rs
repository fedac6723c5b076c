use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poisson-gibbs")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    let out = dir.path().join("out");
    fs::write(
        &config,
        format!("# desk run\nmodel = potts\nsampler = poisson-gibbs\niters = 300\nlambda_mult = 2.0\nout = {:?}\n", out),
    )
    .unwrap();
    let o = cli(&["run", "--config", config.to_str().unwrap(), "--iters", "500", "--every", "100", "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["iters"], 500);
    assert_eq!(m["config"]["lambda_mult"], 2.0);
    assert_eq!(m["config"]["sampler"]["kind"], "poisson-gibbs");
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "chain,iteration,marginal_error,factor_evals,acceptance_rate,mean_minibatch"
    );
    assert_eq!(lines.count(), 5);
}

#[test]
fn gap_check_prints_a_pass_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gap");
    let o = cli(&[
        "run",
        "--model",
        "toy:ising2x2",
        "--sampler",
        "poisson-gibbs",
        "--lambda-mult",
        "1.0",
        "--check",
        "gap-bound",
        "--draws-per-state",
        "50000",
        "--iters",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout.lines().any(|l| l.starts_with("PASS gap-bound")), "{stdout}");
    assert!(out.join("checks.csv").is_file());
}

#[test]
fn sweep_writes_one_directory_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = cli(&[
        "sweep",
        "--model",
        "spin",
        "--sampler",
        "pgda",
        "--lambda-mult",
        "0.5,1,2",
        "--m",
        "3,5",
        "--k",
        "10",
        "--iters",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let index = fs::read_to_string(out.join("index.csv")).unwrap();
    assert_eq!(index.lines().count(), 1 + 6);
    for c in 0..6 {
        let cell = out.join(format!("cell_{c:03}"));
        assert!(cell.join("metrics.csv").is_file());
        assert_eq!(manifest(&cell)["config"]["sampler"]["k"], 10);
    }
}

#[test]
fn systematic_scan_is_recorded_and_restricted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan");
    let o = cli(&["run", "--model", "potts", "--scan", "systematic", "--iters", "200", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["config"]["scan"], "systematic");
    let with_check = cli(&["run", "--model", "toy:ising2x2", "--scan", "systematic", "--check", "reversibility"]);
    assert_eq!(with_check.status.code(), Some(2));
    let with_mh = cli(&["run", "--model", "potts", "--sampler", "mh", "--scan", "systematic"]);
    assert_eq!(with_mh.status.code(), Some(2));
}

#[test]
fn bad_configuration_exits_with_code_two() {
    for args in [
        &["run", "--model", "nonesuch"][..],
        &["run", "--model", "potts", "--sampler", "slice"],
        &["run", "--model", "potts", "--sampler", "pgda"],
        &["run", "--model", "spin", "--sampler", "pgda", "--lambda", "0"],
        &["sweep", "--model", "spin", "--lambda", "1", "--lambda-mult", "2"],
    ] {
        let o = cli(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}
