use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stepsql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepsql"))
        .args(args)
        .env_remove("STEPSQL_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn generate(dir: &Path, level: &str, variant: &str) {
    let out = stepsql(&[
        "generate",
        "--level",
        level,
        "--variant",
        variant,
        "--count",
        "400",
        "--seed",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_writes_splits_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cs3", "syn");
    let lines = |f: &str| fs::read_to_string(dir.path().join(f)).unwrap().lines().count();
    assert_eq!((lines("train.jsonl"), lines("validation.jsonl"), lines("test.jsonl")), (306, 54, 40));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 5);
    assert_eq!(manifest["level"], "CS3");
    assert_eq!(manifest["variant"], "syn");
    assert_eq!(manifest["vocab_sha256"].as_str().unwrap().len(), 64);
    let out = stepsql(&["validate", "--data", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_stepsql"))
        .args(["generate", "--level", "cs1", "--count", "200"])
        .env("STEPSQL_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("train.jsonl").exists());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&stepsql(&["generate", "--level", "cs9", "--out", "x"])), 2);
    assert_eq!(code(&stepsql(&["generate", "--level", "cs1", "--count", "150", "--out", "x"])), 2);
    assert_eq!(code(&stepsql(&["grade", "--gold", "a", "--pred", "b", "--weights", "1,1,1"])), 2);
    assert_eq!(code(&stepsql(&["frobnicate"])), 2);
}

#[test]
fn validate_rejects_tampered_data() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cs2", "base");
    let path = dir.path().join("test.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let mut first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    first["response"] = Value::from("SELECT nope FROM nowhere");
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[0] = first.to_string();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = stepsql(&["validate", "--data", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("example"));
}

#[test]
fn grade_gold_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cs5", "base");
    let gold = dir.path().join("test.jsonl");
    let preds: Vec<String> = fs::read_to_string(&gold)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            serde_json::json!({"id": v["id"], "prediction": v["response"]}).to_string()
        })
        .collect();
    let pred = dir.path().join("pred.jsonl");
    fs::write(&pred, preds.join("\n")).unwrap();
    let reports = dir.path().join("reports.jsonl");
    let out = stepsql(&[
        "grade",
        "--gold",
        gold.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
        "--out",
        reports.to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["exact_match_accuracy"], 1.0);
    assert_eq!(summary["count"], 40);
    assert_eq!(fs::read_to_string(&reports).unwrap().lines().count(), 40);

    fs::write(&pred, r#"{"id": 999999, "prediction": "SELECT a FROM b"}"#).unwrap();
    let out = stepsql(&["grade", "--gold", gold.to_str().unwrap(), "--pred", pred.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_predictions_count_as_failures() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cs1", "base");
    let gold = dir.path().join("test.jsonl");
    let pred = dir.path().join("pred.jsonl");
    fs::write(&pred, "").unwrap();
    let out = stepsql(&["grade", "--gold", gold.to_str().unwrap(), "--pred", pred.to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 0);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["missing"], 40);
    assert_eq!(summary["exact_match_accuracy"], 0.0);
}

#[test]
fn corrupt_writes_pairs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cs2", "syn");
    let pairs = dir.path().join("pairs.jsonl");
    let out = stepsql(&[
        "corrupt",
        "--data",
        dir.path().join("train.jsonl").to_str().unwrap(),
        "--feature",
        "OrderByDirection",
        "--batches",
        "3",
        "--batch-size",
        "10",
        "--out",
        pairs.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&pairs).unwrap();
    assert_eq!(text.lines().count(), 30);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["feature"], "OrderByDirection");
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("pairs.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["batches"], 3);
    assert_eq!(manifest["batch_size"], 10);
}

#[test]
fn corrupt_unsupported_feature_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cs1", "base");
    let out = stepsql(&[
        "corrupt",
        "--data",
        dir.path().to_str().unwrap(),
        "--feature",
        "AggregateFunction",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("AggregateFunction"));
}

#[test]
fn stats_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cs4", "syn");
    let out = stepsql(&["stats", "--data", dir.path().to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stats: Value = serde_json::from_slice(&out.stdout).unwrap();
    let row = stats.as_object().unwrap().values().next().unwrap();
    assert_eq!(row["examples"], 400);
    assert!(row["readability"].is_number());

    let out = stepsql(&["stats", "--data", dir.path().join("train.jsonl").to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("Dataset"));

    let out = stepsql(&["inspect", "--data", dir.path().to_str().unwrap(), "--id", "7"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("id:          7"));
    assert!(text.contains("### Response: SELECT"));
    assert_eq!(code(&stepsql(&["inspect", "--data", dir.path().to_str().unwrap(), "--id", "4000"])), 1);
}
