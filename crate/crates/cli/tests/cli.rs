use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn aae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aae")).args(args).output().expect("binary runs")
}

fn simulate(dir: &Path, world: &str, m: &str, n: &str) -> (String, String) {
    let out = aae(&["--seed", "3", "--out", dir.to_str().unwrap(), "simulate", "--world", world, "--m", m, "--n", n]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let p = |f: &str| dir.join(f).to_str().unwrap().to_string();
    (p("primary.csv"), p("auxiliary.csv"))
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

#[test]
fn simulate_writes_both_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (pri, aux) = simulate(dir.path(), "finite", "40", "90");
    let rows = |p: &str| std::fs::read_to_string(p).unwrap().lines().count();
    // One header line and k rows per task.
    assert_eq!(rows(&pri), 1 + 40 * 2);
    assert_eq!(rows(&aux), 1 + 90 * 2);
}

#[test]
fn fit_report_carries_kind_seed_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (pri, aux) = simulate(dir.path(), "finite", "200", "800");
    let v = json(&aae(&[
        "--seed", "4", "fit", "--primary", &pri, "--auxiliary", &aux, "--beta-star", "0.6,-0.4,0.3",
    ]));
    assert_eq!(v["kind"], "fit");
    assert_eq!(v["seed"], 4);
    assert_eq!(v["payload"]["fit"]["beta_hat"].as_array().unwrap().len(), 3);
    assert!(v["payload"]["metrics"]["mape"].as_f64().unwrap() >= 0.0);
}

#[test]
fn primary_fit_needs_no_auxiliary_file() {
    let dir = tempfile::tempdir().unwrap();
    let (pri, _) = simulate(dir.path(), "finite", "200", "10");
    let v = json(&aae(&["fit", "--primary", &pri, "--estimator", "primary"]));
    assert!(v["payload"]["metrics"].is_null());
}

#[test]
fn inference_reports_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (pri, aux) = simulate(dir.path(), "finite", "300", "1200");
    let v = json(&aae(&["infer", "--primary", &pri, "--auxiliary", &aux]));
    assert_eq!(v["kind"], "inference");
    let se = v["payload"]["aae_standard_errors"].as_array().unwrap();
    assert!(se.iter().all(|s| s.as_f64().unwrap() > 0.0));
}

#[test]
fn csv_output_has_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let (pri, aux) = simulate(dir.path(), "finite", "200", "800");
    let out = aae(&["--format", "csv", "fit", "--primary", &pri, "--auxiliary", &aux]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() > 3);
    assert!(!text.starts_with('{'));
}

#[test]
fn missing_input_is_an_io_error() {
    let out = aae(&["fit", "--primary", "/nonexistent/primary.csv", "--estimator", "primary"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn auxiliary_file_as_primary_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, aux) = simulate(dir.path(), "finite", "20", "200");
    let out = aae(&["fit", "--primary", &aux, "--estimator", "primary"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn singular_label_model_curvature_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let (pri, aux) = simulate(dir.path(), "finite", "100", "300");
    let out = aae(&["infer", "--primary", &pri, "--auxiliary", &aux, "--g", "mlp"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_world_is_rejected() {
    let out = aae(&["simulate", "--world", "nowhere", "--m", "5", "--n", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn savings_curve_mode_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.csv");
    // e(n) = 3 / sqrt(n); matching e(200) from n1 = 50 saves 75%.
    let rows: String = [25.0_f64, 50.0, 100.0, 200.0, 400.0].iter().map(|n| format!("{n},{}\n", 3.0 / n.sqrt())).collect();
    std::fs::write(&curve, format!("size,error\n{rows}")).unwrap();
    let target = format!("{}", 3.0 / 200.0_f64.sqrt());
    let v = json(&aae(&["savings", "--curve", curve.to_str().unwrap(), "--aae-error", &target, "--n1", "50"]));
    let pct = v["payload"]["percent"].as_f64().unwrap();
    assert!((pct - 75.0).abs() < 1e-9, "{pct}");
}

#[test]
fn same_seed_same_bytes_different_seed_different_data() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |d: &Path, seed: &str| {
        let out = aae(&["--seed", seed, "--out", d.to_str().unwrap(), "simulate", "--world", "example1", "--m", "30", "--n", "30"]);
        assert!(out.status.success());
        std::fs::read(d.join("primary.csv")).unwrap()
    };
    assert_eq!(run(a.path(), "1"), run(b.path(), "1"));
    assert_ne!(run(a.path(), "1"), run(c.path(), "2"));
}
