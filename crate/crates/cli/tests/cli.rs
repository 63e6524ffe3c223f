//! End-to-end runs of the `gwolab` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gwolab"))
}

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn summarize_binary_model() {
    let out = run(&["summarize", "--model", &model("gw_binary.json")]);
    assert!(out.status.success());
    let text = stdout(&out);
    for part in ["b=0.5", "a=1", "d=0", "h=2", "c=0"] {
        assert!(text.split_whitespace().any(|w| w == part), "{part} missing from {text}");
    }
}

#[test]
fn figure1_density_jumps_by_a_quarter() {
    let out = run(&["figure1", "--c", "15", "--grid", "0.01"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let at_one: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .filter(|r| r[0] == 1.0)
        .map(|r| r[1])
        .collect();
    assert_eq!(at_one.len(), 2, "left limit and value at y = 1");
    assert!((at_one[1] - at_one[0] - 0.25).abs() < 1e-12);
}

#[test]
fn dp_at_time_zero() {
    let out = run(&["dp", "--model", &model("tabulated_early_birth.json"), "--tmax", "0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "0");
    assert_eq!(row[1].parse::<f64>().unwrap(), 1.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Q(0)=1"));
}

#[test]
fn error_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"model": "gw_binary.json", "tmax": 3, "colour": "red"}"#).unwrap();
    let config = run(&["dp", "--config", bad.to_str().unwrap()]);
    let io = run(&["dp", "--model", "/nonexistent/model.json", "--tmax", "3"]);
    let query = run(&["fdd", "--model", &model("gw_binary.json"), "--times", "2,1", "--z", "0,0"]);
    let usage = run(&["no-such-command"]);
    let codes: Vec<i32> = [&config, &io, &query, &usage].iter().map(|o| o.status.code().unwrap()).collect();
    assert_eq!(codes, vec![3, 4, 15, 2]);
}

#[test]
fn bad_model_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    fs::write(&path, r#"{"variant": "galton_watson", "offspring": [0.5, 0.6]}"#).unwrap();
    let out = run(&["summarize", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(10));
}

#[test]
fn config_echo_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let out = run(&[
        "simulate",
        "--model",
        &model("delayed_death_c1.json"),
        "--times",
        "4,8",
        "--replicates",
        "300",
        "--seed",
        "17",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let echo = dir.path().join("first.csv.config.json");
    let echoed = fs::read_to_string(&echo).unwrap();
    assert!(echoed.contains("\"variant\": \"delayed_death\""), "model is inlined: {echoed}");

    // rerun from the echo, redirecting the output and changing the thread count
    let second = dir.path().join("second.csv");
    let out = run(&["simulate", "--config", echo.to_str().unwrap(), "--out", second.to_str().unwrap(), "--threads", "3"]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&first).unwrap(), fs::read_to_string(&second).unwrap());
}

#[test]
fn config_file_with_relative_model_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(models().join("gw_binary.json"), dir.path().join("m.json")).unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(&cfg, r#"{"command": "dp", "model": "m.json", "tmax": 3, "format": "json"}"#).unwrap();
    let out = run(&["dp", "--config", cfg.to_str().unwrap(), "--tmax", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["q"].as_array().unwrap().len(), 3);
    assert!((v["q"][2].as_f64().unwrap() - 0.375).abs() < 1e-15);

    let wrong = run(&["fdd", "--config", cfg.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(3));
}

#[test]
fn verify_reports_pass() {
    let out = run(&["verify", "--model", &model("tabulated_early_birth.json"), "--check", "oracle", "--tmax", "4"]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("name,statistic,reference,tolerance,passed,provenance,runtime_s"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS"));
}

#[test]
fn limit_and_fdd_values() {
    let out = run(&["limit", "--c", "0", "--y", "2", "--K", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let zero = text.lines().find(|l| l.starts_with("0,")).unwrap();
    assert!((zero[2..].parse::<f64>().unwrap() - 0.5).abs() < 1e-15);

    let out = run(&["fdd", "--model", &model("gw_binary.json"), "--times", "2", "--z", "0"]);
    let text = stdout(&out);
    assert!((text.lines().nth(1).unwrap().parse::<f64>().unwrap() - 0.625).abs() < 1e-15);
}
