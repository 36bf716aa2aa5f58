use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shield(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shield"))
        .args(args)
        .current_dir(dir)
        .env_remove("SHIELD_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, n: &str) {
    let o = shield(dir, &["generate", "--seed", "4", "--n-records", n, "--out", "data"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = shield(
        dir.path(),
        &["bench", "--task", "device", "--seed", "1", "--input", "no/such/file.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/file.csv"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = shield(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    // seed is mandatory
    let o = shield(dir.path(), &["bench", "--task", "device", "--n-records", "500"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"));
    let o = shield(
        dir.path(),
        &["bench", "--task", "device", "--seed", "1", "--n-records", "500", "--models", "gbdt,svm"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generate_prints_counts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let o = shield(dir.path(), &["generate", "--seed", "9", "--n-records", "1000", "--out", "a"]);
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("1000 rows, 200 anomalies, 800 normal"), "{out}");
    assert!(out.contains("1000 rows, 100 anomalies, 900 normal"), "{out}");
    shield(dir.path(), &["generate", "--seed", "9", "--n-records", "1000", "--out", "b"]);
    for f in ["device.csv", "attack.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn models_flag_runs_exactly_those_detectors() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "1500");
    let o = shield(
        dir.path(),
        &[
            "bench", "--task", "device", "--seed", "2", "--input", "data/device.csv",
            "--models", "gbdt,knn", "--repeats", "1", "--out", "run",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/report.json")).unwrap()).unwrap();
    let ran: Vec<&str> = report["models"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|m| m["status"] == "ok")
        .map(|m| m["model"].as_str().unwrap())
        .collect();
    assert_eq!(ran, ["gbdt", "knn"]);

    // nothing is written outside the data and output directories
    let mut entries: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    entries.sort();
    assert_eq!(entries, ["data", "run"]);

    let o = shield(dir.path(), &["report", "--report", "run/report.json", "--out", "rerender"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("run/report.csv")).unwrap(),
        fs::read(dir.path().join("rerender/report.csv")).unwrap()
    );

    let o = shield(
        dir.path(),
        &["score", "--pipeline", "run/pipeline.json", "--input", "data/device.csv", "--out", "scored"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let scored = fs::read_to_string(dir.path().join("scored/scores.csv")).unwrap();
    assert_eq!(scored.lines().count(), 1501);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "task": "cyber",
        "seed": 5,
        "generator": {"n_records": 1500, "anomaly_rate": 0.1},
        "models": ["isoforest"],
        "overrides": {"knn": {"k": 3}},
        "formats": ["json"],
        "output_dir": "from-config"
    }"#;
    fs::write(dir.path().join("run.json"), cfg).unwrap();
    let o = shield(
        dir.path(),
        &["bench", "--config", "run.json", "--models", "knn", "--repeats", "1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("from-config/report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["models"][0]["model"], "knn");
    assert_eq!(report["protocol"], "full_train");
    assert!(!dir.path().join("from-config/report.csv").exists());
}

#[test]
fn select_is_byte_reproducible_and_a_subset() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "1500");
    for out in ["s1", "s2"] {
        let o = shield(
            dir.path(),
            &["select", "--task", "cyber", "--seed", "3", "--input", "data/attack.csv", "--out", out],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["feature_scores.csv", "selected_features.txt"] {
        assert_eq!(
            fs::read(dir.path().join("s1").join(f)).unwrap(),
            fs::read(dir.path().join("s2").join(f)).unwrap()
        );
    }
    let scores = fs::read_to_string(dir.path().join("s1/feature_scores.csv")).unwrap();
    let candidates: Vec<&str> = scores.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let chosen = fs::read_to_string(dir.path().join("s1/selected_features.txt")).unwrap();
    assert!(!chosen.trim().is_empty());
    for f in chosen.lines() {
        assert!(candidates.contains(&f), "{f}");
    }
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_shield"))
        .args(["generate", "--seed", "1", "--n-records", "200", "--task", "device"])
        .current_dir(dir.path())
        .env("SHIELD_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_shield"))
        .args(["generate", "--seed", "1", "--n-records", "200", "--task", "device"])
        .current_dir(dir.path())
        .env("SHIELD_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn failed_detector_exits_3_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "task": "device",
        "seed": 2,
        "generator": {"n_records": 800},
        "models": ["knn", "gbdt"],
        "overrides": {"knn": {"k": 100000}},
        "formats": ["json"],
        "output_dir": "run"
    }"#;
    fs::write(dir.path().join("run.json"), cfg).unwrap();
    let o = shield(dir.path(), &["bench", "--config", "run.json", "--repeats", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("knn"), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("run/report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["models"][0]["status"], "failed");
    assert_eq!(report["models"][1]["status"], "ok");
}
