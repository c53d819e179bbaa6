use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use ccc_dht::template::VertexLabel;
use ccc_sim::verify::{check_occupancy, churned_overlay, run_verify};
use ccc_sim::{parse_file, run_experiment, ExperimentSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ccc-sim"))
}

fn overrides(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn small_spec(out: &Path) -> ExperimentSpec {
    let out = out.display().to_string();
    ExperimentSpec::resolve(
        BTreeMap::new(),
        overrides(&[
            ("n", "400"),
            ("lambda", "4"),
            ("horizon_multiple", "8"),
            ("data_ops", "20"),
            ("seed", "11"),
            ("out", &out),
        ]),
    )
    .unwrap()
}

#[test]
fn occupancy_fault_is_detected_and_named() {
    let mut overlay = churned_overlay(3, 2);
    assert!(check_occupancy(&overlay).passed);
    let label = VertexLabel::from_bits("101", 2).unwrap();
    overlay.inject_occupancy_fault(label);
    let result = check_occupancy(&overlay);
    assert!(!result.passed);
    assert!(result.detail.contains(&label.to_string()), "{}", result.detail);
}

#[test]
fn verify_suite_passes_at_dimensions_two_and_four() {
    for dim in [2, 4] {
        for check in run_verify(dim, 7) {
            assert!(check.passed, "dim {dim}: {check}");
        }
    }
}

#[test]
fn verify_flag_exits_cleanly() {
    let out = bin().args(["--verify", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");
    let out = bin().args(["--verify", "99"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    let out = bin().args(["--lambda", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n"));
    let out = bin().args(["--n", "1000", "--session", "pareto"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.cfg");
    fs::write(&config, "# test\nn = 400\nlambda=2\nseed=3\n").unwrap();
    let file = parse_file(&fs::read_to_string(&config).unwrap()).unwrap();
    let spec = ExperimentSpec::resolve(file.clone(), overrides(&[("lambda", "8")])).unwrap();
    assert_eq!(spec.lambda, 8.0);
    assert_eq!(spec.seed, 3);
    assert_eq!(spec.n, 400.0);
    // The rendered spec parses back to the same experiment.
    let again = ExperimentSpec::resolve(parse_file(&spec.render()).unwrap(), BTreeMap::new()).unwrap();
    assert_eq!(again, spec);
}

#[test]
fn identical_runs_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = run_experiment(&small_spec(a.path())).unwrap();
    let fb = run_experiment(&small_spec(b.path())).unwrap();
    assert_eq!(fa.files.len(), fb.files.len());
    for (x, y) in fa.files.iter().zip(&fb.files) {
        assert_eq!(x.file_name(), y.file_name());
        if x.extension().is_some_and(|e| e == "csv") {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
    }
}

#[test]
fn binary_writes_metrics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--n", "300", "--lambda", "3", "--horizon-multiple", "7", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let header = metrics.lines().next().unwrap();
    assert!(header.starts_with("time,live_peers,dimension,coverage"));
    assert!(metrics.lines().count() > 10);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(dir.path().join("resolved-spec.txt").exists());
}

#[test]
fn sweep_writes_one_file_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let spec = ExperimentSpec::resolve(
        BTreeMap::new(),
        overrides(&[
            ("n", "300"),
            ("sweep", "300,600"),
            ("lambda", "3"),
            ("horizon_multiple", "6"),
            ("out", &out),
        ]),
    )
    .unwrap();
    let artifacts = run_experiment(&spec).unwrap();
    assert!(dir.path().join("metrics-n300.csv").exists());
    assert!(dir.path().join("metrics-n600.csv").exists());
    assert_eq!(artifacts.summaries.len(), 2);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}
