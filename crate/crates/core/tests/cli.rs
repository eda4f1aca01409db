use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfimprove"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn intervals_zero_budget_row() {
    let dir = tempdir().unwrap();
    let out = run(dir.path(), &["intervals", "--a", "1", "--nu", "0"]);
    assert!(out.status.success());
    let csv = read(dir.path(), "intervals.csv");
    assert!(csv.lines().any(|l| l == "I,1,0,0,0.98,true"), "{csv}");
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "intervals_manifest.json")).unwrap();
    assert_eq!(manifest["subcommand"], "intervals");
    assert_eq!(manifest["params"]["nu"], 0.0);
}

#[test]
fn scan_and_simulate_are_deterministic() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    for dir in [&a, &b] {
        assert!(run(dir.path(), &["scan", "--panel", "c", "--fast"]).status.success());
        assert!(run(dir.path(), &["simulate", "--questions", "500", "--rounds", "2", "--replications", "3", "--seed", "9"])
            .status
            .success());
    }
    for name in ["panel_c.csv", "simulation.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn manifest_replays_byte_identical() {
    let first = tempdir().unwrap();
    let out = run(first.path(), &["thresholds", "--beta-lo", "0.2", "--x0", "0.4", "--seed", "3"]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read(first.path(), "thresholds_manifest.json")).unwrap();
    let argv: Vec<String> = manifest["argv"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    // swap the recorded output directory for a fresh one
    let second = tempdir().unwrap();
    let mut replay: Vec<String> = argv[1..].to_vec();
    let pos = replay.iter().position(|a| a == "--out").unwrap();
    replay[pos + 1] = second.path().to_string_lossy().into_owned();
    let status = Command::new(env!("CARGO_BIN_EXE_selfimprove")).args(&replay).output().unwrap().status;
    assert!(status.success());
    assert_eq!(read(first.path(), "thresholds.csv"), read(second.path(), "thresholds.csv"));
}

#[test]
fn zero_initialization_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let target = dir.path().join("out");
    let out = run(&target, &["thresholds", "--x0", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());
}

#[test]
fn malformed_flag_writes_nothing() {
    let dir = tempdir().unwrap();
    let target = dir.path().join("out");
    for args in [&["scan", "--panel", "z"][..], &["intervals", "--gamma", "abc"], &["intervals", "--c", "1.5"]] {
        let out = run(&target, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!target.exists(), "{args:?}");
    }
}

#[test]
fn config_rejects_unknown_keys_and_flags_win() {
    let dir = tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"gamma": 0.05, "colour": 1}"#).unwrap();
    let out = run(&dir.path().join("o1"), &["intervals", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"gamma": 0.05, "c": 0.8}"#).unwrap();
    let o2 = dir.path().join("o2");
    let out = run(&o2, &["intervals", "--config", good.to_str().unwrap(), "--gamma", "0.1"]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read(&o2, "intervals_manifest.json")).unwrap();
    assert_eq!(manifest["params"]["gamma"], 0.1);
    assert_eq!(manifest["params"]["c"], 0.8);
}

#[test]
fn verify_fast_passes() {
    let dir = tempdir().unwrap();
    let out = run(dir.path(), &["verify", "--fast"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}
