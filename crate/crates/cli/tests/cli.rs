//! End-to-end runs of the `spherepart` binary.

use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spherepart"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_partition_verify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let solved = run(d, &["--seed", "3", "solve", "--n", "3", "--L", "8", "--p", "2", "--tol", "0.02"]);
    assert!(solved.status.success(), "{}", String::from_utf8_lossy(&solved.stderr));
    let weights = json(&d.join("weights.json"));
    assert!(weights["report"]["max_mass_error"].as_f64().unwrap() <= 0.02);
    assert_eq!(weights["weights"]["lambda"].as_array().unwrap().len(), 8);

    let w = d.join("weights.json");
    let part = run(d, &["partition", "--weights", w.to_str().unwrap(), "--points-csv", "cells.csv"]);
    assert!(part.status.success(), "{}", String::from_utf8_lossy(&part.stderr));
    let csv = std::fs::read_to_string(d.join("cells.csv")).unwrap();
    assert!(csv.starts_with("x0,x1,x2,cell\n"));
    assert_eq!(csv.lines().count(), 8001);

    let p = d.join("partition.json");
    let verified = run(d, &["verify", "--partition", p.to_str().unwrap()]);
    assert!(verified.status.success(), "{}", String::from_utf8_lossy(&verified.stderr));
    let report = json(&d.join("report.json"));
    assert_eq!(report["satisfied_normalized"], Value::Bool(true));
}

#[test]
fn constants_are_echoed_and_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["constants", "--n", "3", "--p", "2"]);
    assert!(out.status.success());
    let echoed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(echoed, json(&dir.path().join("constants.json")));
    assert_eq!(echoed["intrinsic"]["a_p"].as_f64(), Some(0.0625));
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(!run(d, &["solve", "--n", "3", "--p", "2"]).status.success());
    assert!(!run(d, &["constants", "--n", "3", "--p", "0.5"]).status.success());
    assert!(!run(d, &["partition", "--weights", "missing.json"]).status.success());
    assert!(!run(d, &["sliced", "--mu1", "m.csv", "--mu2", "m.csv", "--p", "2", "--q", "2", "--dense", "10"])
        .status
        .success());
    // Neither a partition nor a dense direction count.
    assert!(!run(d, &["sliced", "--mu1", "m.csv", "--mu2", "m.csv", "--p", "2", "--q", "2"])
        .status
        .success());
}

#[test]
fn sliced_dense_estimate_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.csv"), "x0,x1,x2\n0,0,0\n1,0,0\n").unwrap();
    std::fs::write(d.join("b.csv"), "x0,x1,x2\n0,0,1\n1,0,1\n").unwrap();
    let a = d.join("a.csv");
    let b = d.join("b.csv");
    let out = run(
        d,
        &[
            "sliced",
            "--mu1",
            a.to_str().unwrap(),
            "--mu2",
            b.to_str().unwrap(),
            "--p",
            "2",
            "--q",
            "inf",
            "--dense",
            "2000",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Translation by e3: the max-sliced distance is |v| = 1, nearly attained.
    let v = json(&d.join("sliced.json"));
    assert!(v["partition"].is_null());
    let value = v["dense"]["value"].as_f64().unwrap();
    assert!(value <= 1.0 + 1e-12 && value > 0.99, "{value}");
}
