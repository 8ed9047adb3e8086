//! Exit-code and stream contract of the compiled binary: 0 on success,
//! 1 on validation failure, 2 on runtime failure; diagnostics go to stderr.

mod common;

use std::process::Command;

use common::desk_fixture;

fn oodmon() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oodmon"))
}

#[test]
fn list_exits_zero_and_prints_to_stdout() {
    let out = oodmon().arg("list").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Energy"));
    assert!(stdout.contains("Box"));
}

#[test]
fn parse_success_exits_zero_with_stderr_summary() {
    let fx = desk_fixture(20, &[8], "");
    let out = oodmon().arg("parse").arg("--config").arg(&fx.config).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty(), "data must not land on stdout");
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse ok"));
}

#[test]
fn validation_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "network = \"nope.json\"\ndataset.path = \"nope.mnzd\"\n").unwrap();
    let out = oodmon().arg("parse").arg("--config").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("network"), "stderr: {stderr}");
    assert!(stderr.contains("dataset.path"));
}

#[test]
fn missing_config_flag_exits_one() {
    let out = oodmon().arg("evaluate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_writes_into_out_override() {
    let fx = desk_fixture(20, &[8], "monitors = [\"Softmax\"]");
    let target = fx.dir.path().join("custom_out");
    let out = oodmon()
        .arg("evaluate")
        .arg("--config")
        .arg(&fx.config)
        .arg("--out")
        .arg(&target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("report.json").is_file());
}
