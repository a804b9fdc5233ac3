use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn nullwave(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nullwave"))
        .args(args)
        .env_remove("NULLWAVE_OUT_ROOT")
        .current_dir(root)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, v: Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, v.to_string()).unwrap();
    p
}

fn run_dir(out: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&out.stdout).lines().next().unwrap())
}

#[test]
fn classify_writes_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        json!({"task": "classify", "system": "example2", "profile": {"shape": "bump", "amplitudes": [0, 1]}}),
    );
    let out_root = tmp.path().join("runs");
    let out = nullwave(
        &["classify", "--config", cfg.to_str().unwrap(), "--out", out_root.to_str().unwrap(), "--threads", "1"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    assert!(dir.starts_with(&out_root));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(v["condition1"], json!(false));
    assert_eq!(v["condition2"], json!("satisfied"));
    assert_eq!(v["predicted"], json!("unstable"));
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn default_root_is_under_the_working_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        json!({"system": "example1", "profile": {"shape": "bump", "amplitudes": [0, 1]}, "params": {"ts": [4.0], "samples": 100000}}),
    );
    let out = nullwave(&["geometry", "--config", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join(run_dir(&out));
    assert!(dir.starts_with(tmp.path().join("nullwave-runs")));
    assert!(dir.join("geometry.json").exists());
}

#[test]
fn validation_failure_exits_two_and_lists_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        json!({"task": "fdtd", "system": "example2", "profile": {"shape": "bump", "amplitudes": [0, 1]},
               "params": {"h": 0.0, "epsilon": -1.0}}),
    );
    let out = nullwave(&["fdtd", "--config", cfg.to_str().unwrap(), "--out", "runs"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("spacing") && err.contains("epsilon"), "{err}");
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn task_mismatch_and_missing_file_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        json!({"task": "mode", "system": "example2", "profile": {"shape": "bump", "amplitudes": [0, 1]}}),
    );
    let out = nullwave(&["blowup", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = nullwave(&["mode", "--config", "absent.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        json!({"task": "fdtd", "system": "example2", "profile": {"shape": "bump", "amplitudes": [0, 1]},
               "params": {"half_width": 4.0, "h": 0.5, "t_max": 2.0, "epsilon": 1e8, "transform": false}}),
    );
    let out = nullwave(&["fdtd", "--config", cfg.to_str().unwrap(), "--out", "runs"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    let diag = err.lines().find_map(|l| l.strip_prefix("diagnostics: ")).expect("diagnostics path");
    let d: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join(diag)).unwrap()).unwrap();
    assert_eq!(d["task"], json!("fdtd"));
}
