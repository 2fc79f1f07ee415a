use std::fs;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn strongmin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strongmin")).args(args).output().expect("binary runs")
}

fn completion_instance() -> Value {
    json!({
        "operator": {
            "kind": "entry_mask",
            "n1": 3,
            "n2": 3,
            "m": 6,
            "payload": [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [2, 0]]
        },
        "x0": [[4, 2, 4], [2, 1, 2], [4, 2, 4]]
    })
}

fn sweep_config(dir: &tempfile::TempDir) -> std::path::PathBuf {
    let cfg = json!({
        "n": 4,
        "rank_list": [1],
        "m_grid": [6, 12, 16],
        "trials": 2,
        "seed": 5
    });
    let path = dir.path().join("small.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn certify_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    fs::write(&path, completion_instance().to_string()).unwrap();
    let out = strongmin(&["certify", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["label"], "strong_not_sharp");
    assert_eq!(rep["recovered"], true);
}

#[test]
fn solve_prints_solution() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    fs::write(&path, completion_instance().to_string()).unwrap();
    let out = strongmin(&["solve", path.to_str().unwrap()]);
    assert!(out.status.success());
    let res: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((res["x_opt"][2][2].as_f64().unwrap() - 4.0).abs() < 1e-4);
}

#[test]
fn missing_instance_exits_2() {
    let out = strongmin(&["certify", "definitely-missing.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{ not json").unwrap();
    let out = strongmin(&["certify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn exp1_writes_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(&dir);
    let csv = dir.path().join("rows.csv");
    let out = strongmin(&["exp1", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,n,r,m,recovered,sharp,strong_not_sharp,tau,rho,zeta,ic,solver_iters,wall_ms"
    );
    assert_eq!(lines.count(), 6);
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rows.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["curves"][0]["m"], json!([6, 12, 16]));
}

#[test]
fn exp2_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(&dir);
    let run = |threads: &str| {
        let out = strongmin(&["exp2", "--config", cfg.to_str().unwrap(), "--threads", threads]);
        assert!(out.status.success());
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .map(|l| l[..l.rfind(',').unwrap()].to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, json!({"n": 3, "rank_list": [1], "m_grid": [10], "trials": 1, "seed": 0}).to_string()).unwrap();
    assert_eq!(strongmin(&["exp2", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn fixtures_print_three_passes() {
    let out = strongmin(&["fixtures"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3, "{text}");
}

#[test]
fn demos_succeed() {
    let out = strongmin(&["demo-minimal", "--n", "5", "--r", "2", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = strongmin(&["demo-lrr", "--q", "2", "--n1", "4", "--n2", "3", "--r", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn demo_with_bad_shape_exits_2() {
    assert_eq!(strongmin(&["demo-lrr", "--q", "5", "--n1", "3"]).status.code(), Some(2));
}
