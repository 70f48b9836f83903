use std::path::Path;
use std::process::{Command, Output, Stdio};

use std::io::Write;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_streamhar"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// Synthesizes a train and a test stream and trains a model on the first.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--profile", "home_a", "--episodes", "200", "--seed", "1", "--out", "train.txt"]);
    ok(d, &["synth", "--profile", "home_a", "--episodes", "40", "--seed", "2", "--out", "test.txt"]);
    ok(d, &["train", "--train", "train.txt", "--model", "model.json"]);
    dir
}

#[test]
fn synth_train_run_pipeline() {
    let dir = prepared();
    let d = dir.path();
    let out = ok(d, &["run", "--model", "model.json", "--test", "test.txt"]);
    let segments: Vec<serde_json::Value> = out
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["type"] == "segment_complete")
        .collect();
    assert!(!segments.is_empty());
    for s in &segments {
        assert!(s["segment"]["label"].is_string());
        assert!(s["segment"]["begin_index"].as_u64() <= s["segment"]["end_index"].as_u64());
    }
    let again = ok(d, &["run", "--model", "model.json", "--test", "test.txt"]);
    assert_eq!(out, again);
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(dir.path(), &["synth", "--episodes", "20", "--seed", "9"]);
    let b = ok(dir.path(), &["synth", "--episodes", "20", "--seed", "9"]);
    let c = ok(dir.path(), &["synth", "--episodes", "20", "--seed", "10"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn live_with_empty_input_prints_nothing() {
    let dir = prepared();
    let mut child = bin()
        .current_dir(dir.path())
        .args(["run", "--live", "--model", "model.json"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    drop(child.stdin.take());
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
}

#[test]
fn live_equals_batch() {
    let dir = prepared();
    let d = dir.path();
    let batch = ok(d, &["run", "--model", "model.json", "--test", "test.txt"]);
    let text = std::fs::read_to_string(d.join("test.txt")).unwrap();
    let mut child = bin()
        .current_dir(d)
        .args(["run", "--live", "--model", "model.json"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(text.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), batch);
}

#[test]
fn tune_beta_has_one_column_per_candidate() {
    let dir = prepared();
    let out = ok(dir.path(), &["tune", "beta", "--train", "train.txt", "--test", "test.txt", "--candidates", "2,3,4,5"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "dataset,beta_2,beta_3,beta_4,beta_5");
    assert_eq!(lines[1].split(',').count(), 5);
}

#[test]
fn tune_alpha_without_test_holds_out_a_tail() {
    let dir = prepared();
    let out = ok(dir.path(), &["tune", "alpha", "--train", "train.txt", "--candidates", "0,0.08"]);
    assert!(out.starts_with("dataset,alpha_0,alpha_0.08\ntrain,"));
}

#[test]
fn evaluate_split_with_baselines() {
    let dir = prepared();
    let d = dir.path();
    let out = ok(d, &["evaluate", "--train", "train.txt", "--test", "test.txt", "--baseline", "sw,tw", "--out", "report"]);
    let models: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["HHMM", "SW", "TW"]);
    assert_eq!(std::fs::read_to_string(d.join("report/summary.csv")).unwrap(), out);
    let confusion = std::fs::read_to_string(d.join("report/confusion.csv")).unwrap();
    assert!(confusion.lines().next().unwrap().ends_with(",Other"));
    assert!(d.join("report/baseline_sw.jsonl").is_file());
}

#[test]
fn evaluate_cross_validates_without_test() {
    let dir = prepared();
    let out = ok(dir.path(), &["evaluate", "--train", "train.txt", "--folds", "2", "--out", "cv"]);
    assert_eq!(out.lines().count(), 2);
    let folds = std::fs::read_to_string(dir.path().join("cv/folds.csv")).unwrap();
    assert_eq!(folds.lines().count(), 3);
}

#[test]
fn correct_relabels_with_a_new_alpha() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["run", "--model", "model.json", "--test", "test.txt", "--out", "run.jsonl"]);
    let out = ok(d, &["correct", "--model", "model.json", "--input", "run.jsonl", "--alpha", "1e9"]);
    let labels: Vec<String> = out
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["type"] == "segment_complete")
        .map(|v| v["segment"]["label"].as_str().unwrap().to_owned())
        .collect();
    assert!(!labels.is_empty());
    assert!(labels.iter().all(|l| l == "Other"));
}

#[test]
fn config_file_then_flags() {
    let dir = prepared();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "[paths]\ntrain = \"train.txt\"\ntest = \"test.txt\"\n[hhmm]\nbeta = 9\n").unwrap();
    let o = run(d, &["tune", "beta", "--config", "run.toml", "--candidates", "3"]);
    assert!(o.status.success());
    std::fs::write(d.join("bad.toml"), "[hhmm]\nbeta = 1\n").unwrap();
    assert_eq!(run(d, &["train", "--config", "bad.toml"]).status.code(), Some(2));
    assert!(run(d, &["train", "--config", "bad.toml", "--beta", "3", "--train", "train.txt", "--model", "m2.json"])
        .status
        .success());
}

#[test]
fn exit_codes() {
    let dir = prepared();
    let d = dir.path();
    assert_eq!(run(d, &["run", "--model", "missing.json", "--test", "test.txt"]).status.code(), Some(3));
    assert_eq!(run(d, &["run", "--model", "model.json", "--test", "missing.txt"]).status.code(), Some(3));
    assert_eq!(run(d, &["run", "--test", "test.txt"]).status.code(), Some(2));
    assert_eq!(run(d, &["synth", "--profile", "castle"]).status.code(), Some(2));
    assert_eq!(run(d, &["evaluate", "--train", "train.txt", "--baseline", "xx"]).status.code(), Some(2));
    assert_eq!(run(d, &["train", "--train", "train.txt", "--model", "m.json", "--alpha", "-1"]).status.code(), Some(2));
    std::fs::write(d.join("bad.txt"), "not an event\n").unwrap();
    let o = run(d, &["train", "--train", "bad.txt", "--model", "m.json", "--strict"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("events error"));
    std::fs::write(d.join("garbage.json"), "{}").unwrap();
    assert_eq!(run(d, &["run", "--model", "garbage.json", "--test", "test.txt"]).status.code(), Some(1));
}
