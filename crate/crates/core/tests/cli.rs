use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pvbs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvbs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn gap_of_unit_square() {
    let out = pvbs(&["gap", "--box", "1,1", "--lambda", "1,1"]);
    assert!(out.status.success());
    let gap = json(&out)["result"]["gap"].as_f64().unwrap();
    assert!((gap - (2.0 - 2f64.sqrt())).abs() < 1e-10);
}

#[test]
fn invalid_parameters_exit_with_two() {
    let out = pvbs(&["bounds", "--lambda=-1,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("pvbs:"));
    let out = pvbs(&["kernel", "--box", "1,1", "--lambda", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_and_inline_command_conflict() {
    let out = pvbs(&["--config", "nowhere.json", "bounds", "--lambda", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_is_io_error() {
    let out = pvbs(&["--config", "/nonexistent/job.json"]);
    assert_eq!(out.status.code(), Some(1));
}

fn artifacts(dir: &Path, name: &str) -> (Value, String) {
    let report = std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap();
    let table = std::fs::read_to_string(dir.join(format!("{name}.csv"))).unwrap();
    (serde_json::from_str(&report).unwrap(), table)
}

#[test]
fn artifacts_replay_identically() {
    let first = tempfile::tempdir().unwrap();
    let out_dir = first.path().to_str().unwrap();
    let out = pvbs(&["--out", out_dir, "scaling", "--sizes", "6,10,14", "--lambda", "0.5"]);
    assert!(out.status.success());
    let (report, table) = artifacts(first.path(), "scaling");
    assert!(table.starts_with("# config: "));
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let second = tempfile::tempdir().unwrap();
    let artifact = first.path().join("scaling.json");
    let out = pvbs(&[
        "--config",
        artifact.to_str().unwrap(),
        "--out",
        second.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let (again, table_again) = artifacts(second.path(), "scaling");
    assert_eq!(report, again);
    assert_eq!(table, table_again);
}

#[test]
fn site_file_region_is_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.sites");
    std::fs::write(&path, "# L shape\n0 0\n1 0\n0 1\n").unwrap();
    let out = pvbs(&["lattice", "--sites", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["site_list_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(v["result"]["sites"].as_u64(), Some(3));
}
