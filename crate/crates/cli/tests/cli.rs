use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_eqte");

fn eqte(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("EQTE_THREADS", "2").output().expect("binary runs")
}

/// Linear outcome plus a GPD(σ = 1, ξ = 0.2) error evaluated at a
/// low-discrepancy sequence of levels.
fn write_gpd_tailed(path: &Path, n: usize) {
    let mut s = String::from("y,d,x\n");
    for i in 0..n {
        let u = ((i as f64 + 0.5) * 0.618_033_988_749_895).fract();
        let v = ((i as f64 + 0.5) * 0.754_877_666_246_692_7).fract();
        let x = (v - 0.5) * 4.0;
        let d = i % 3 == 0;
        let e = ((1.0 - u).powf(-0.2) - 1.0) / 0.2;
        let y = 2.0 + if d { 1.5 } else { 0.0 } + 0.8 * x + e;
        writeln!(s, "{y},{},{x}", d as u8).unwrap();
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn threshold_on_a_gpd_tail_keeps_the_first_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("gpd.csv");
    let out = dir.path().join("thr.json");
    write_gpd_tailed(&data, 800);
    let o = eqte(&[
        "threshold", "--data", data.to_str().unwrap(), "--outcome", "y", "--treatment", "d", "--ad-replicates", "199",
        "--seed", "3", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["selection"]["k_hat"], 0);
    assert_eq!(v["selection"]["selected_level"], 0.75);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["convention"], "paper-literal");
    assert!(v["version"].is_string() && v["config"]["lambda"].is_number());
    assert!(String::from_utf8_lossy(&o.stdout).contains("tau_u = 0.75"));
}

#[test]
fn validation_errors_exit_with_two() {
    let o = eqte(&["threshold", "--data", "/nonexistent/input.csv", "--outcome", "y", "--treatment", "d"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/input.csv"));

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("gpd.csv");
    write_gpd_tailed(&data, 200);
    let d = data.to_str().unwrap();
    let o = eqte(&["threshold", "--data", d, "--outcome", "y", "--treatment", "d", "--lambda", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = eqte(&["threshold", "--data", d, "--outcome", "nope", "--treatment", "d"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
    let o = eqte(&["simulate", "--reps", "10"]);
    assert_eq!(o.status.code(), Some(2));
    let o = eqte(&["estimate", "--data", d, "--outcome", "y", "--treatment", "d", "--methods", "tmle"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimation_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tiny.csv");
    write_gpd_tailed(&data, 20);
    let o = eqte(&["threshold", "--data", data.to_str().unwrap(), "--outcome", "y", "--treatment", "d"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("threshold selection"));
}

fn estimate_json(dir: &Path, methods: &str, extra: &[&str], name: &str) -> (Value, String) {
    let data = dir.join("gpd.csv");
    if !data.exists() {
        write_gpd_tailed(&data, 400);
    }
    let out = dir.join(name);
    let mut args = vec![
        "estimate", "--data", data.to_str().unwrap(), "--outcome", "y", "--treatment", "d", "--methods", methods,
        "--p", "0.85,0.95", "--ad-replicates", "99", "--out", out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = eqte(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    (serde_json::from_str(&text).unwrap(), text)
}

#[test]
fn estimate_reports_every_cell_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (v, first) = estimate_json(dir.path(), "proposed,ipw,firpo", &["--bootstrap", "0", "--seed", "9"], "a.json");
    let cells = v["results"].as_array().unwrap();
    assert_eq!(cells.len(), 12);
    for c in cells {
        assert!(c["point"].is_number());
        assert!(c.get("se").is_none() && c.get("ci_low").is_none());
    }
    assert!(cells.iter().any(|c| c["method"] == "proposed" && c["transition_level"].is_number()));
    assert!(v.get("bootstrap").is_none());
    let (_, second) = estimate_json(dir.path(), "proposed,ipw,firpo", &["--bootstrap", "0", "--seed", "9"], "a.json");
    assert_eq!(first, second);
}

#[test]
fn estimate_with_bootstrap_emits_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let (v, _) = estimate_json(
        dir.path(),
        "ipw,firpo",
        &["--bootstrap", "100", "--seed", "2"],
        "boot.json",
    );
    for c in v["results"].as_array().unwrap() {
        let (lo, hi) = (c["ci_low"].as_f64().unwrap(), c["ci_high"].as_f64().unwrap());
        assert!(lo <= hi && c["se"].as_f64().unwrap() >= 0.0);
    }
    assert_eq!(v["bootstrap"]["replicates"], 100);
}

#[test]
fn simulate_reports_self_relative_proposed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("study");
    let o = eqte(&[
        "simulate", "--n", "500", "--error", "t1", "--reps", "50", "--p", "0.995", "--estimands", "qte",
        "--oracle-draws", "1000000", "--ad-replicates", "99", "--out", prefix.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("study.txt")).unwrap();
    assert!(table.contains("RV") && table.contains("TMLE"));
    let csv = std::fs::read_to_string(dir.path().join("study.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let rv = header.iter().position(|h| *h == "rv").unwrap();
    let rmse = header.iter().position(|h| *h == "rmse").unwrap();
    let proposed = csv.lines().find(|l| l.contains(",proposed,")).unwrap();
    let cols: Vec<&str> = proposed.split(',').collect();
    assert_eq!(cols[rv], "1");
    assert_eq!(cols[rmse], "1");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("study.json")).unwrap()).unwrap();
    assert_eq!(v["command"], "simulate");
}

#[test]
fn generate_writes_the_site_schema() {
    let o = eqte(&["generate", "--n", "60", "--seed", "1"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 10);
    assert!(text.starts_with("aadt,cs,"));
}
