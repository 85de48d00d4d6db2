use std::path::PathBuf;
use std::process::{Command, Output};

fn demo(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "demo", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toposqt"))
        .args(args)
        .env_remove("TOPOSQT_TOL")
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn json(args: &[&str]) -> serde_json::Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn contexts_of_demo_systems() {
    let q = json(&["contexts", &demo("qubit.json"), "--format", "json"]);
    assert_eq!(q["count"], 3);
    let two = json(&["contexts", &demo("two_qubits.json"), "--format", "json"]);
    assert!(two["count"].as_u64().unwrap() >= 10);
    let point = json(&["contexts", &demo("trivial.json"), "--format", "json"]);
    assert_eq!(point["count"], 1);
    assert_eq!(point["contexts"][0]["rank_signature"], "2");
}

#[test]
fn malformed_json_is_a_parse_error() {
    let dir = std::env::temp_dir().join("toposqt-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\"name\": \"q\", \"kind\": ").unwrap();
    assert_eq!(code(&["contexts", bad.to_str().unwrap()]), 2);
    assert_eq!(code(&["contexts", "/nonexistent/system.json"]), 2);
    assert_eq!(code(&["contexts", &demo("coin.json")]), 2);
}

#[test]
fn das_tables() {
    let out = json(&["das", &demo("qubit.json"), "--op", "x", "--format", "json"]);
    let mut rows: Vec<Vec<f64>> = out["contexts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect())
        .collect();
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(rows, vec![vec![-1.0, 1.0], vec![1.0], vec![1.0, 1.0]]);

    let id = json(&["das", &demo("qubit.json"), "--op", "I", "--format", "json"]);
    for r in id["contexts"].as_array().unwrap() {
        assert!(r["values"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(1.0)));
    }
    let one = json(&["das", &demo("qubit.json"), "--op", "z", "--context", "V0", "--format", "json"]);
    assert_eq!(one["contexts"].as_array().unwrap().len(), 1);
    assert_eq!(code(&["das", &demo("qubit.json"), "--op", "nope"]), 4);
    assert_eq!(code(&["das", &demo("qubit.json"), "--op", "z", "--context", "V9"]), 4);
}

#[test]
fn truth_values() {
    let poset = json(&["contexts", &demo("qubit.json"), "--format", "json"]);
    let vz = poset["contexts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| {
            let p = &c["projections"][0]["entries"];
            c["rank_signature"] == "1+1" && p[0][1][0].as_f64() == Some(0.0) && p[1][0][0].as_f64() == Some(0.0)
        })
        .map(|c| c["id"].as_str().unwrap().to_string())
        .expect("V_z present");

    let eigen = json(&["truth", &demo("qubit.json"), "--state", "[1,0]", "--prop", "up", "--at", &vz, "--format", "json"]);
    assert_eq!(eigen["totally_true"], true);
    let text = run(&["truth", &demo("qubit.json"), "--state", "[1,0]", "--prop", "z=1", "--at", &vz]);
    assert!(String::from_utf8_lossy(&text.stdout).contains("totally true"));

    let h = std::f64::consts::FRAC_1_SQRT_2.to_string();
    let state = format!("[{h},{h}]");
    let sup = json(&["truth", &demo("qubit.json"), "--state", &state, "--prop", "up", "--at", &vz, "--format", "json"]);
    assert_eq!(sup["totally_true"], false);
    assert_eq!(sup["members"], serde_json::json!(["V0"]));

    assert_eq!(code(&["truth", &demo("qubit.json"), "--state", "[1,1]", "--prop", "up", "--at", &vz]), 5);
    assert_eq!(code(&["truth", &demo("qubit.json"), "--state", "[1,0,0]", "--prop", "up", "--at", &vz]), 5);
    assert_eq!(code(&["truth", &demo("qubit.json"), "--state", "[1,0]", "--prop", "nope", "--at", &vz]), 4);
    assert_eq!(code(&["truth", &demo("qubit.json"), "--state", "oops", "--prop", "up", "--at", &vz]), 2);
}

#[test]
fn check_exit_codes() {
    assert_eq!(code(&["check", "--suite", "all"]), 0);
    let out = run(&["check", "--suite", "lemma", "--perturb", "1e-3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1.000e-3"));
    assert_eq!(code(&["check", "--suite", "bogus"]), 2);
    assert_eq!(code(&["check", "--suite", "trivial", "--tol", "0"]), 2);
    let bad_env = Command::new(env!("CARGO_BIN_EXE_toposqt"))
        .args(["check", "--suite", "trivial"])
        .env("TOPOSQT_TOL", "-1")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(2));
    let flag_wins = Command::new(env!("CARGO_BIN_EXE_toposqt"))
        .args(["check", "--suite", "trivial", "--tol", "1e-8"])
        .env("TOPOSQT_TOL", "-1")
        .output()
        .unwrap();
    assert_eq!(flag_wins.status.code(), Some(0));
}

#[test]
fn translations() {
    let sum = json(&["translate-sum", &demo("qubit.json"), &demo("line.json"), "--op1", "x", "--op2", "c", "--format", "json"]);
    assert_eq!(sum["equal"], true);
    let tensor = json(&[
        "translate-tensor",
        &demo("qubit.json"),
        &demo("qubit.json"),
        "--op",
        "z",
        "--entangled",
        &demo("two_qubits.json"),
        "--format",
        "json",
    ]);
    assert!(tensor["max_stage_residual"].as_f64().unwrap() <= 1e-8);
    assert!(tensor["stages"].as_array().unwrap().len() >= 10);
    assert_eq!(code(&["translate-sum", &demo("qubit.json"), &demo("line.json"), "--op1", "q", "--op2", "c"]), 4);
}

#[test]
fn gap_search_report_is_deterministic() {
    let dir = std::env::temp_dir().join("toposqt-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let (a, b) = (dir.join("gap-a.json"), dir.join("gap-b.json"));
    for p in [&a, &b] {
        assert_eq!(code(&["gap-search", "--seed", "3", "--format", "json", "--out", p.to_str().unwrap()]), 0);
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let report: serde_json::Value = serde_json::from_slice(&ta).unwrap();
    let best = report["witnesses"][0]["gap_norm"].as_f64().unwrap();
    assert!(best >= 1.0);

    let product = json(&["gap-search", "--families", "product-only", "--format", "json"]);
    assert_eq!(product["witnesses"].as_array().unwrap().len(), 0);
    assert_eq!(code(&["gap-search", "--families", "mystery"]), 2);
}

#[test]
fn export_formats() {
    let out = json(&["export", &demo("qubit.json"), "--format", "json"]);
    assert_eq!(out["sigma"]["stages"].as_array().unwrap().len(), 3);
    let dot = run(&["export", &demo("qubit.json"), "--format", "dot"]);
    assert!(String::from_utf8_lossy(&dot.stdout).starts_with("digraph"));
    assert_eq!(code(&["das", &demo("qubit.json"), "--op", "x", "--format", "dot"]), 2);
}
