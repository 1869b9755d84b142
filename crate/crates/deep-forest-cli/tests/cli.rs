//! End-to-end runs of the binary: every subcommand exercised against real
//! files, with outputs parsed back and cross-checked.

use std::path::{Path, PathBuf};
use std::process::Command;

fn data_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

struct CliRun {
    stdout: String,
    stderr: String,
}

fn run_ok(args: &[&str]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_deep-forest"))
        .args(args)
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(
        out.status.success(),
        "cli failed: {args:?}\n{stdout}{stderr}"
    );
    CliRun { stdout, stderr }
}

fn run_err(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_deep-forest"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(!out.status.success(), "expected failure: {args:?}");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn train_predict_round_trip_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("iris.model.json");
    let iris = data_file("iris.csv");
    let run = run_ok(&[
        "train",
        "--data",
        iris.to_str().unwrap(),
        "--strategy",
        "dbc",
        "--bin-size",
        "20",
        "--trees",
        "10",
        "--seed",
        "3",
        "--model-out",
        model.to_str().unwrap(),
    ]);
    assert!(
        run.stdout.contains("trained"),
        "missing summary: {}",
        run.stdout
    );
    assert!(model.exists());

    let first = dir.path().join("pred1.csv");
    let second = dir.path().join("pred2.csv");
    for out in [&first, &second] {
        let run = run_ok(&[
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--data",
            iris.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            run.stderr.contains("accuracy:"),
            "labelled input must report accuracy, got {}",
            run.stderr
        );
    }
    let a = std::fs::read(&first).unwrap();
    let b = std::fs::read(&second).unwrap();
    assert_eq!(a, b, "a saved model must predict identically every time");

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id,predicted,confidence,exit_level"));
    let classes: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(classes.len(), 150);
    for class in &classes {
        assert!(
            ["setosa", "versicolor", "virginica"].contains(class),
            "prediction used an unknown label {class}"
        );
    }
}

#[test]
fn predict_works_without_a_label_column() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    run_ok(&[
        "train",
        "--data",
        data_file("iris.csv").to_str().unwrap(),
        "--trees",
        "5",
        "--seed",
        "1",
        "--model-out",
        model.to_str().unwrap(),
    ]);

    // Strip the label column to simulate scoring unlabelled data.
    let text = std::fs::read_to_string(data_file("iris.csv")).unwrap();
    let unlabelled: String = text
        .lines()
        .map(|l| {
            let fields: Vec<&str> = l.split(',').collect();
            fields[..4].join(",")
        })
        .collect::<Vec<_>>()
        .join("\n");
    let features = dir.path().join("unlabelled.csv");
    std::fs::write(&features, unlabelled + "\n").unwrap();

    let run = run_ok(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        features.to_str().unwrap(),
    ]);
    assert!(
        !run.stderr.contains("accuracy"),
        "no labels, no accuracy line"
    );
    assert_eq!(run.stdout.lines().count(), 151);
}

#[test]
fn analyze_reports_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let mut text = String::from("id,confidence,correct,predicted\n");
    let correct = [1, 1, 1, 1, 0, 0, 1, 0, 0, 1, 0, 0];
    for (k, c) in correct.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{},0\n",
            k + 1,
            (98 - 2 * k) as f64 / 100.0,
            c
        ));
    }
    std::fs::write(&trace, text).unwrap();

    let run = run_ok(&[
        "analyze",
        "--trace",
        trace.to_str().unwrap(),
        "--ta",
        "0.7",
        "--bin-size",
        "2",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
    assert_eq!(v["instances"], 12);
    assert_eq!(v["prefix_gate"], 0.86);
    assert_eq!(v["prefix_screened"], 7);
    assert_eq!(v["binning_gate"], 0.92);
    assert_eq!(v["binning_screened"], 4);
    assert_eq!(v["binning_accuracy"], 1.0);
    assert_eq!(v["mis_partitioned"], 2);

    let text_run = run_ok(&[
        "analyze",
        "--trace",
        trace.to_str().unwrap(),
        "--ta",
        "0.7",
        "--bin-size",
        "2",
    ]);
    assert!(
        text_run.stdout.contains("mis-partitioned"),
        "{}",
        text_run.stdout
    );
}

#[test]
fn trained_trace_feeds_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("iris_trace.csv");
    run_ok(&[
        "train",
        "--data",
        data_file("iris.csv").to_str().unwrap(),
        "--trees",
        "10",
        "--seed",
        "2",
        "--trace-out",
        trace.to_str().unwrap(),
    ]);
    let run = run_ok(&[
        "analyze",
        "--trace",
        trace.to_str().unwrap(),
        "--ta",
        "0.95",
        "--bin-size",
        "15",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
    assert_eq!(v["instances"], 150);
    let prefix = v["prefix_screened"].as_u64().unwrap();
    let binning = v["binning_screened"].as_u64().unwrap();
    assert!(prefix <= 150 && binning <= 150);
}

#[test]
fn stats_reproduces_paired_t_values_from_fold_columns() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("folds.csv");
    let dbc = [97.33, 96.97, 96.72, 97.33, 97.00];
    let gccs = [97.22, 96.60, 96.47, 97.03, 96.83];
    let gcf = [97.12, 97.00, 96.62, 97.28, 97.10];
    let mut text = String::from("dataset,DBC-Forest,gcForestcs,gcForest\n");
    for f in 0..5 {
        text.push_str(&format!("fold{f},{},{},{}\n", dbc[f], gccs[f], gcf[f]));
    }
    std::fs::write(&table, text).unwrap();

    let run = run_ok(&["stats", "--table", table.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
    let pair = |a: &str, b: &str| -> f64 {
        v["pairwise_t"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["a"] == a && p["b"] == b)
            .unwrap_or_else(|| panic!("pair {a}/{b} missing"))["t"]
            .as_f64()
            .unwrap()
    };
    assert!((pair("DBC-Forest", "gcForestcs") - 5.827).abs() < 1e-3);
    assert!((pair("DBC-Forest", "gcForest") - 0.964).abs() < 1e-3);
    assert!(v["nemenyi_cd"].as_f64().unwrap() > 0.0);
    assert_eq!(v["mean_ranks"].as_array().unwrap().len(), 3);
}

#[test]
fn cv_report_is_reproducible_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = dir.path().join(name);
        run_ok(&[
            "train",
            "--data",
            data_file("iris.csv").to_str().unwrap(),
            "--trees",
            "5",
            "--cv",
            "2",
            "--seed",
            "5",
            "--report-out",
            path.to_str().unwrap(),
        ]);
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        v["timing"] = serde_json::Value::Null;
        reports.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn gcforest_strategy_never_gates() {
    let dir = tempfile::tempdir().unwrap();
    let curves = dir.path().join("curves.csv");
    run_ok(&[
        "train",
        "--data",
        data_file("iris.csv").to_str().unwrap(),
        "--strategy",
        "gcforest",
        "--trees",
        "5",
        "--seed",
        "4",
        "--curves-out",
        curves.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&curves).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("level,remaining,oof_accuracy,cumulative_accuracy,gate")
    );
    let mut rows = 0;
    for line in lines {
        rows += 1;
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(
            fields[1], "150",
            "gcForest must keep every instance in play"
        );
        assert_eq!(fields[4], "none", "gcForest must not gate: {line}");
    }
    assert!(rows >= 1);
}

#[test]
fn bad_inputs_fail_with_clear_messages() {
    let stderr = run_err(&["train", "--data", "/nonexistent.csv"]);
    assert!(stderr.contains("nonexistent"), "{stderr}");

    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.csv");
    std::fs::write(&trace, "wrong,header\n1,2\n").unwrap();
    let stderr = run_err(&["analyze", "--trace", trace.to_str().unwrap(), "--ta", "0.7"]);
    assert!(stderr.contains("header"), "{stderr}");

    let stderr = run_err(&["analyze", "--trace", trace.to_str().unwrap(), "--ta", "1.5"]);
    assert!(stderr.contains("0, 1"), "{stderr}");
}
