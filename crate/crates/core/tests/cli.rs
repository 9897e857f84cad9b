use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_highway-lab")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_smoke_run_writes_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested").join("train");
    let o = lab(&["train", "--budget", "500", "--seed", "3", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("trained 500 steps"));
    assert!(out.join("checkpoint.bin").is_file());
    let log = std::fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,episode,return,loss,epsilon,collisions"));
    assert!(log.lines().count() > 2);
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[agent]\ngama = 0.9\n").unwrap();
    let o = lab(&["train", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama"));
}

#[test]
fn bad_flag_values_are_config_errors() {
    let o = lab(&["eval", "--checkpoint", "x.bin", "--shield", "maybe"]);
    assert_eq!(o.status.code(), Some(1));
    let o = lab(&["eval", "--checkpoint", "x.bin", "--noise", "2.0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["eval", "--checkpoint", path(&dir.path().join("none.bin")), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("none.bin"));
}

#[test]
fn eval_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    assert!(lab(&["train", "--budget", "200", "--out", path(&train)]).status.success());
    let ckpt = train.join("checkpoint.bin");
    let out = dir.path().join("eval");
    let o = lab(&[
        "eval", "--checkpoint", path(&ckpt), "--out", path(&out), "--scenarios", "3", "--density", "4", "--shield", "on",
        "--noise", "0.05",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read(out.join("metrics.csv")).unwrap();
    let parsed = highway_lab::harness::read_metrics_csv(metrics.as_slice()).unwrap();
    assert_eq!(parsed.len(), 1);
    assert_eq!(parsed[0].scenarios.len(), 3);
    assert!(parsed[0].setting.shield);
    assert_eq!(parsed[0].setting.noise, 0.05);
    assert!(std::fs::read_to_string(out.join("table.txt")).unwrap().contains("1 veh / 4 s"));
    let lines = std::fs::read_to_string(out.join("trajectories.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["policy"], "rl");
    assert!(first["steps"].as_array().unwrap().len() > 0);
}
