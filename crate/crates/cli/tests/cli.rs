use std::fs;
use std::path::Path;
use std::process::Command;

use xicoal_cli::experiments::repro::snapshot;

fn xicoal(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_xicoal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

#[test]
fn simulate_writes_trajectory_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = xicoal(&["simulate", "--n", "200", "--alpha", "0.5", "--weights", "constant", "--seed", "7"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n"], 200);
    assert!(summary["t_mrca"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = xicoal(&["simulate", "--n", "100", "--weights", "gamma:2", "--seed", "3"], d.path());
        assert!(o.status.success());
    }
    assert_eq!(snapshot(a.path()).unwrap(), snapshot(b.path()).unwrap());
}

#[test]
fn coag_table_has_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = xicoal(&["coag", "--z", "0.5,0.25", "--x", "1.5", "--ell-max", "10", "--weights", "gamma:1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("coag.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "ell,value,tail_bound");
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn verify_single_criterion_twice_is_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = xicoal(&["verify", "scaling", "--quick", "--seed", "42"], d.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    }
    let sa = snapshot(a.path()).unwrap();
    assert!(sa.contains_key("criterion-03-scaling.json"));
    assert!(!sa.contains_key("metadata.json"));
    assert_eq!(sa, snapshot(b.path()).unwrap());
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = xicoal(&["simulate", "--n", "10", "--weights", "weibull:1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown weight law"));
    let o = xicoal(&["verify", "nonsense"], dir.path());
    assert!(!o.status.success());
}
