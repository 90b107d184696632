use std::process::{Command, Output};

use crqkd::report::CSV_HEADER;
use crqkd::timing::SWEEP_HEADER;

fn crqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crqkd")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn sweep_prints_the_full_grid() {
    let o = crqkd(&["sweep", "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SWEEP_HEADER));
    assert_eq!(lines.count(), 25);
}

#[test]
fn sweep_for_one_group_size() {
    let o = crqkd(&["sweep", "--lg", "512", "--format", "json"]);
    assert!(o.status.success());
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["l_g"] == 512));
}

#[test]
fn bad_input_exits_with_one() {
    assert_eq!(crqkd(&["run", "--scenario", "garage"]).status.code(), Some(1));
    assert_eq!(crqkd(&["run", "--mode", "warp"]).status.code(), Some(1));
    assert_eq!(crqkd(&["run", "--lg", "1001"]).status.code(), Some(1));
    assert_eq!(crqkd(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn scenario_file_round_trip_through_cli() {
    let dir = std::env::temp_dir().join(format!("crqkd-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("tiny.toml");
    let mut cfg = crqkd::scenario::ScenarioConfig::preset("hall").unwrap();
    cfg.name = "tiny".into();
    cfg.requests[0].groups = 3;
    cfg.qkd.n_qubits = 20_000;
    cfg.n_probes = 8192;
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let path = path.to_str().unwrap();

    let a = crqkd(&["run", "--scenario", path, "--format", "csv"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = stdout(&a);
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert_eq!(text.lines().count(), 4);
    let b = crqkd(&["run", "--scenario", path, "--format", "csv"]);
    assert_eq!(stdout(&b), text);

    let m = crqkd(&["multiuser", "--scenario", path, "--format", "json"]);
    assert!(m.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&m)).unwrap();
    assert_eq!(v["pairs"][0]["unified"], true);
    assert_eq!(v["pairs"][0]["delivered"], 3);

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn eavesdropped_qkd_exits_with_two() {
    let dir = std::env::temp_dir().join(format!("crqkd-eve-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("eve.toml");
    let mut cfg = crqkd::scenario::ScenarioConfig::preset("hall").unwrap();
    cfg.qkd.eve_active = true;
    cfg.qkd.n_qubits = 20_000;
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let o = crqkd(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}
