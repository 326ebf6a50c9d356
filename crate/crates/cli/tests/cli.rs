//! End-to-end runs of the `rheoctl` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_rheoctl");

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/golden.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.json");
    fs::write(&p, body).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_of(out: &Output) -> (String, String) {
    let v: Value = serde_json::from_slice(&out.stderr).expect("error is JSON");
    (
        v["error"]["kind"].as_str().unwrap().to_string(),
        v["error"]["message"].as_str().unwrap().to_string(),
    )
}

#[test]
fn golden_config_is_echoed_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(golden()).unwrap();
    let cfg = write_config(dir.path(), &text);
    let out = run(&["verify", "constants", "--config", cfg.to_str().unwrap(), "--threads", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(dir.path().join("out/run_log.txt")).unwrap();
    let echo = log.split_once("config:\n").unwrap().1;
    assert!(echo.starts_with(&text));
    assert_eq!(log.matches(&text).count(), 1);
}

#[test]
fn tensor_campaign_on_golden_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify", "tensor", "--config", golden().to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(), "--threads", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("tensor_report.json"));
    assert_eq!(r["samples"], 100_000);
    for c in r["checks"].as_array().unwrap() {
        let m = c["worst_margin"].as_f64().unwrap();
        let s = c["worst_scale"].as_f64().unwrap();
        assert!(m >= -1e-12 * s, "{c}");
        assert_eq!(c["violations"], 0);
    }
}

#[test]
fn zero_force_gives_rest_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"nx": 8, "ny": 8}, "exponent": {"kind": "constant", "value": 1.5}, "force": {"kind": "zero"}}"#,
    );
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("out/solve_report.json"));
    assert_eq!(r["y_l2_norm"].as_f64(), Some(0.0));
    assert_eq!(r["y_max_abs"].as_f64(), Some(0.0));
    for f in ["y_u.csv", "y_v.csv", "p.csv", "y.vtk", "p.vtk", "run_log.txt"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn canonical_optimization_has_monotone_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"nx": 12, "ny": 12}, "exponent": {"kind": "constant", "value": 1.8},
            "control": {"max_iter": 6, "reg_nu": 1e-4}}"#,
    );
    let out = run(&["optimize", "--config", cfg.to_str().unwrap(), "--threads", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert!(lines.next().unwrap().starts_with("iteration,j,"));
    let j: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(j.len() >= 2);
    assert!(j.windows(2).all(|w| w[1] <= w[0]), "{j:?}");
    let r = json(&dir.path().join("out/optimize_report.json"));
    assert_eq!(r["trace_invariants_hold"], true);
    assert!(r["tracking_reduction"].as_f64().unwrap() > 0.0);
}

#[test]
fn reports_are_reproducible_single_threaded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"nx": 8, "ny": 8}, "exponent": {"kind": "expression", "expr": "1.6 + 0.3*x1"},
            "force": {"kind": "canonical", "amplitude": 5.0},
            "verification": {"samples": 3000, "jacobian_samples": 50, "mms_levels": [8, 16, 32]}}"#,
    );
    let runs = ["a", "b"].map(|tag| {
        let out_dir = dir.path().join(tag);
        for cmd in [&["solve"][..], &["verify", "tensor"], &["verify", "mms"], &["tensor-check"]] {
            let mut args: Vec<&str> = cmd.to_vec();
            args.extend(["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--threads", "1", "--seed", "17"]);
            let out = run(&args);
            assert!(out.status.success(), "{cmd:?}: {}", String::from_utf8_lossy(&out.stderr));
        }
        out_dir
    });
    for f in [
        "solve_report.json", "y_u.csv", "y_v.csv", "p.csv", "tensor_report.json",
        "mms_report.json", "convergence.csv", "tensor_check_report.json",
    ] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    assert_eq!(json(&runs[0].join("tensor_report.json"))["seed"], 17);
}

#[test]
fn invalid_configs_fail_with_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"grid": {"nx": 8, "ny": 8}, "exponent": {"kind": "constant", "value": 0.9}}"#);
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let (kind, msg) = error_of(&out);
    assert_eq!(kind, "config");
    assert!(msg.contains("exponent.value") && msg.contains("alpha0 > 1"), "{msg}");

    let cfg = write_config(dir.path(), r#"{"grid": {"nx": 8, "ny": 8}, "exponent": {"kind": "constant", "value": 2}, "extra": 1}"#);
    let (kind, msg) = error_of(&run(&["solve", "--config", cfg.to_str().unwrap()]));
    assert_eq!(kind, "config");
    assert!(msg.contains("extra"), "{msg}");

    let out = run(&["solve", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(error_of(&out).0, "io");
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out).0, "usage");
}

#[test]
fn sharp_exponent_campaign_passes() {
    // alpha range [2, 2] makes the campaign run at the sharp case only
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"nx": 8, "ny": 8}, "exponent": {"kind": "constant", "value": 2},
            "verification": {"samples": 200, "alpha0": 2.0, "alpha_inf": 2.0}}"#,
    );
    let out = run(&["verify", "tensor", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let r = json(&dir.path().join("out/tensor_report.json"));
    assert_eq!(r["constants"]["c4"], 1.0);
}
