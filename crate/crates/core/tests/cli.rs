use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qefb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qefb")).args(args).output().expect("spawn qefb")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn error_record(out: &Output) -> Value {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).expect("json error record on stderr");
    assert!(v["error"]["message"].is_string());
    v
}

#[test]
fn graph_gen_then_info() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.txt");
    let p = path.to_str().unwrap();
    let out = qefb(&["graph", "gen", "--nodes", "64", "--edges", "236", "--seed", "1", "--out", p]);
    assert!(out.status.success());
    let info = json_stdout(&qefb(&["graph", "info", p]));
    assert_eq!(info["nodes"], 64);
    assert_eq!(info["edges"], 236);
    assert_eq!(info["connected"], true);
    assert!((info["lambda_max"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(info["lambda_min"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn design_commands() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.txt");
    let p = path.to_str().unwrap();
    assert!(qefb(&["graph", "gen", "--nodes", "20", "--edges", "40", "--out", p]).status.success());

    let fir = json_stdout(&qefb(&["design", "fir", "--graph", p, "--order", "6", "--cutoff", "0.5"]));
    assert_eq!(fir["taps"].as_array().unwrap().len(), 7);
    assert_eq!(fir["interval"], serde_json::json!([0.0, 1.0]));

    let arma = json_stdout(&qefb(&["design", "arma", "--graph", p, "--c", "0.5"]));
    assert_eq!(arma["branches"][0]["psi"], -0.5);
    assert_eq!(arma["branches"][0]["phi"], 1.0);
    assert!((arma["contraction"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let bad = qefb(&["design", "arma", "--graph", p, "--branches", "1.5:1,0.2:0.3"]);
    assert_eq!(error_record(&bad)["error"]["kind"], "unstable");
}

#[test]
fn simulate_matches_golden_file() {
    let out = qefb(&["simulate", data("mini.json").to_str().unwrap(), "--format", "csv", "--out", "-"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let golden = std::fs::read_to_string(data("mini.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
}

#[test]
fn simulate_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let out = qefb(&[
        "simulate",
        data("mini.json").to_str().unwrap(),
        "--format",
        "json",
        "--trials",
        "20",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let table = qefb::harness::read_results(&path).unwrap();
    assert_eq!(table.rows.len(), 16);
    assert!(table.rows.iter().all(|r| r.trials == 20));
}

#[test]
fn predict_reports_every_cell() {
    let v = json_stdout(&qefb(&["predict", data("mini.json").to_str().unwrap()]));
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 8);
    for c in cells {
        let off = c["off"]["zeta"].as_f64().unwrap();
        let fb = c["feedback"]["zeta"].as_f64().unwrap();
        assert!(fb <= off);
        assert!(c["predicted_gain_db"].as_f64().unwrap() >= 0.0);
        let plan = &c["plan"];
        let (n, k) = (plan["nodes"].as_u64().unwrap(), plan["stages"].as_u64().unwrap());
        assert_eq!(plan["theta"].as_array().unwrap().len() as u64, n * k);
    }
}

#[test]
fn validate_quick_suite() {
    let v = json_stdout(&qefb(&["validate", "--suite", "gramian", "--quick"]));
    assert_eq!(v["passed"], true);
    assert_eq!(v["suites"][0]["suite"], "gramian");
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"id": "x", "bogus": 1}"#).unwrap();
    let v = error_record(&qefb(&["simulate", bad.to_str().unwrap()]));
    assert_eq!(v["error"]["kind"], "json");

    let v = error_record(&qefb(&["graph", "info", dir.path().join("missing.txt").to_str().unwrap()]));
    assert_eq!(v["error"]["kind"], "io");
}
