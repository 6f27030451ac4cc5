use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn exitwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exitwalk")).args(args).env("EXITWALK_THREADS", "2").output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sample_writes_one_row_per_walk() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = exitwalk(&[
        "sample",
        "--preset",
        "bm",
        "--a",
        "-1",
        "--b",
        "1",
        "--n",
        "1000",
        "--seed",
        "3",
        "--out-dir",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("time"));
    assert_eq!(lines.count(), 1000);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["report"]["n_samples"], 1000);
    let mean = report["report"]["mean_time"].as_f64().unwrap();
    assert!((mean - 1.0).abs() < 0.15, "{mean}");
}

#[test]
fn report_config_reruns_identically() {
    let first = tempfile::tempdir().unwrap();
    let o = exitwalk(&[
        "sample",
        "--preset",
        "ou",
        "--k",
        "2",
        "--mu",
        "0.3",
        "--a",
        "-1",
        "--b",
        "1.5",
        "--n",
        "300",
        "--seed",
        "9",
        "--out-dir",
        first.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let second = tempfile::tempdir().unwrap();
    let mut cfg = read_json(&first.path().join("report.json"))["config"].clone();
    cfg["out_dir"] = Value::String(second.path().to_str().unwrap().to_string());
    let cfg_path = second.path().join("config.json");
    fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let o = exitwalk(&["sample", "--config", cfg_path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let a = fs::read(first.path().join("samples.csv")).unwrap();
    let b = fs::read(second.path().join("samples.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(exitwalk(&["sample", "--preset", "nope", "--out-dir", out]).status.code(), Some(2));
    assert_eq!(exitwalk(&["sample", "--bogus-flag"]).status.code(), Some(2));
    assert_eq!(exitwalk(&["steps", "--preset", "bm", "--out-dir", out]).status.code(), Some(2));
    assert_eq!(
        exitwalk(&["sample", "--preset", "bm", "--a", "1", "--b", "-1", "--out-dir", out]).status.code(),
        Some(2)
    );
    assert_eq!(exitwalk(&["sample", "--config", "/nonexistent/cfg.json"]).status.code(), Some(4));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = exitwalk(&["sample", "--preset", "bm", "--n", "10", "--out-dir", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"preset": "bm", "colour": 3}"#).unwrap();
    assert_eq!(exitwalk(&["sample", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn compare_rejects_mismatched_euler_interval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"preset": "bm", "a": -1, "b": 1, "n": 10, "euler": {"a": -2}}"#).unwrap();
    let o = exitwalk(&["compare", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn euler_mean_approaches_walk_as_step_shrinks() {
    let mut gaps = Vec::new();
    for h in ["1e-2", "1e-4"] {
        let dir = tempfile::tempdir().unwrap();
        let o = exitwalk(&[
            "compare",
            "--preset",
            "bm",
            "--a",
            "-1",
            "--b",
            "1",
            "--n",
            "4000",
            "--seed",
            "5",
            "--euler-h",
            h,
            "--euler-bridge",
            "false",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let c = &read_json(&dir.path().join("compare.json"))["comparison"];
        let walk = c["walk"]["mean_time"].as_f64().unwrap();
        let oracle = c["oracle"]["mean_time"].as_f64().unwrap();
        gaps.push((walk - oracle).abs());
        assert!(dir.path().join("cdf_walk.csv").exists() && dir.path().join("cdf_oracle.csv").exists());
    }
    assert!(gaps[1] < gaps[0], "{gaps:?}");
}

#[test]
fn steps_table_grows_with_log_eps() {
    let dir = tempfile::tempdir().unwrap();
    let o = exitwalk(&[
        "steps",
        "--preset",
        "bm",
        "--a",
        "-1",
        "--b",
        "1",
        "--n",
        "500",
        "--eps-list",
        "1e-1,1e-2,1e-3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = &read_json(&dir.path().join("steps_fit.json"))["fit"];
    assert_eq!(fit["rows"].as_array().unwrap().len(), 3);
    assert!(fit["slope"].as_f64().unwrap() > 0.0);
    assert_eq!(fs::read_to_string(dir.path().join("steps.csv")).unwrap().lines().count(), 4);
}

#[test]
fn growth_sample_stays_in_positive_interval() {
    let dir = tempfile::tempdir().unwrap();
    let o = exitwalk(&[
        "sample",
        "--preset",
        "growth",
        "--alpha0",
        "0.5",
        "--sigma0",
        "1",
        "--a",
        "0.5",
        "--b",
        "2",
        "--x0",
        "1",
        "--n",
        "200",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "exit_position").unwrap();
    for line in csv.lines().skip(1) {
        let y: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!(y > 0.45 && y < 2.1, "{y}");
    }
}
