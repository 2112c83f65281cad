use std::path::Path;
use std::process::{Command, Output};

use lqhv::scenarios::{chsh_scenario, BellFunctional, CHSH_ALICE, CHSH_BOB};
use lqhv::states::make_singlet;
use serde_json::Value;

const SINGLET: &str = r#"{"dims":[2,2],"vector":[[0,0],[0.7071067811865476,0],[-0.7071067811865476,0],[0,0]]}"#;

fn lqhv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqhv")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let out = lqhv(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn reproduce_cases() {
    let r = json(&["reproduce", "--case", "singlet-sqrt3"]);
    assert!((r["trace_norm"].as_f64().unwrap() - 3f64.sqrt()).abs() < 1e-9);
    let r = json(&["reproduce", "--case", "chsh-gamma"]);
    assert!((r["gamma"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-6);
    assert_eq!(r["variables"], 32);
    assert_eq!(r["seed"], 0);
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn generic_bounds() {
    let r = json(&["bounds", "--dims", "2,2", "--settings", "3,3"]);
    assert_eq!(r["final_upper"].as_f64(), Some(3.0));
    let r = json(&["bounds", "--dims", "2,2,2", "--settings", "2,2,2"]);
    assert_eq!(r["final_upper"].as_f64(), Some(9.0));
    let table = String::from_utf8(lqhv(&["bounds", "--dims", "2,2", "--settings", "2,2"]).stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("final_upper") && l.ends_with("3.0")));
}

#[test]
fn gamma_dual_and_bell_eval() {
    let dir = tempfile::tempdir().unwrap();
    let sc = chsh_scenario(make_singlet(), CHSH_ALICE, CHSH_BOB).unwrap();
    let sc_path = write(dir.path(), "s.json", &serde_json::to_string(&sc).unwrap());
    let dual = dir.path().join("f.json");
    let measure = dir.path().join("m.json");
    let r = json(&[
        "gamma",
        "--scenario",
        &sc_path,
        "--dual-out",
        dual.to_str().unwrap(),
        "--measure-out",
        measure.to_str().unwrap(),
    ]);
    assert!((r["gamma"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-6);
    assert_eq!(r["lhv"], false);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&measure).unwrap()).unwrap();
    assert_eq!(m["weights"].as_array().unwrap().len(), 16);

    let r = json(&["bell-eval", "--scenario", &sc_path, "--functional", dual.to_str().unwrap()]);
    assert!((r["ratio"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-5);

    let chsh = write(dir.path(), "chsh.json", &serde_json::to_string(&BellFunctional::chsh()).unwrap());
    let r = json(&["bell-eval", "--scenario", &sc_path, "--functional", &chsh, "--upsilon", "1"]);
    assert_eq!(r["b_sup"].as_f64(), Some(2.0));
    assert!((r["quantum_value"].as_f64().unwrap().abs() - 2.0 * 2f64.sqrt()).abs() < 1e-9);
    assert_eq!(r["analog_inequality_holds"], false);
}

#[test]
fn source_op_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let st = write(dir.path(), "st.json", SINGLET);
    let op = dir.path().join("op.json");
    let out = lqhv(&[
        "source-op", "--state", &st, "--settings", "1,2", "--builder", "tau", "--format", "json", "--out",
        op.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&op).unwrap()).unwrap();
    assert!(r["defining_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["builder"], "tau");

    let r = json(&["verify", "--op", op.to_str().unwrap(), "--check", "covering-bracket", "--restarts", "4"]);
    assert!(r["lower"].as_f64().unwrap() <= r["upper"].as_f64().unwrap() + 1e-12);
    let r = json(&["verify", "--op", op.to_str().unwrap(), "--check", "tensor-positivity", "--restarts", "4"]);
    assert!(r["status"].is_string());
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let st = write(dir.path(), "st.json", SINGLET);
    let args = [
        "upsilon", "--state", &st, "--settings", "2,2", "--outcomes", "2,2", "--budget", "60", "--seed", "7", "--format",
        "json",
    ];
    let a = lqhv(&args);
    let b = lqhv(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let mut seq = args.to_vec();
    seq.extend(["--exec", "sequential"]);
    assert_eq!(lqhv(&seq).stdout, a.stdout);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = lqhv(&["gamma", "--scenario", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let bad = write(dir.path(), "bad.json", "{\"dims\": [2,\n");
    let out = lqhv(&["bounds", "--settings", "2,2", "--state", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let not_a_state = write(dir.path(), "trace.json", r#"{"dims":[2],"vector":[[1,0],[1,0]]}"#);
    let out = lqhv(&["bounds", "--settings", "2", "--state", &not_a_state]);
    assert_eq!(out.status.code(), Some(1));

    let st = write(dir.path(), "st.json", SINGLET);
    let out = lqhv(&["source-op", "--state", &st, "--settings", "2,2", "--builder", "tau_tilde"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("one setting"));
}

#[test]
fn dimension_cap_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let st = write(dir.path(), "st.json", SINGLET);
    let out = Command::new(env!("CARGO_BIN_EXE_lqhv"))
        .args(["source-op", "--state", &st, "--settings", "1,3", "--builder", "tau"])
        .env("LQHV_DIM_CAP", "8")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap"));
}
