use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn robam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robam"))
        .args(args)
        .env("ROBAM_WORKERS", "2")
        .output()
        .expect("robam runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Runs a command writing to a fresh directory and returns (exit, report).
fn run_report(args: &[&str]) -> (i32, Value, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut full: Vec<&str> = args.to_vec();
    let out_dir = dir.path().to_str().unwrap().to_string();
    full.extend(["--out", &out_dir]);
    let out = robam(&full);
    let report = std::fs::read_to_string(dir.path().join("report.json"))
        .map(|t| serde_json::from_str(&t).unwrap())
        .unwrap_or(Value::Null);
    (code(&out), report, dir)
}

fn num(v: &Value, key: &str) -> f64 {
    v["result"][key].as_f64().unwrap_or_else(|| panic!("missing {key} in {v}"))
}

#[test]
fn price_reproduces_the_small_examples() {
    for (file, expected) in [("call_one_step.json", 0.1), ("trinomial_band.json", 0.1), ("constant.json", 0.7)] {
        let path = config(file);
        let (c, rep, _d) = run_report(&["price", "--config", path.to_str().unwrap()]);
        assert_eq!(c, 0, "{file}");
        assert!((num(&rep, "value") - expected).abs() < 1e-9, "{file}: {rep}");
        assert_eq!(rep["command"], "price");
        assert_eq!(rep["ok"], true);
    }
}

#[test]
fn hedge_of_a_constant_is_cash() {
    let path = config("constant.json");
    let (c, rep, dir) = run_report(&["hedge", "--config", path.to_str().unwrap()]);
    assert_eq!(c, 0);
    let plan = &rep["result"]["plan"];
    assert!((plan["x"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    for key in ["q", "q_tilde"] {
        for e in plan[key].as_array().unwrap() {
            for x in e["position"].as_array().unwrap() {
                assert!(x.as_f64().unwrap().abs() < 1e-12);
            }
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("hedge_plan.csv")).unwrap();
    assert!(csv.starts_with("kind,date,vertex,status,coordinate,value"));
}

#[test]
fn hedge_matches_price_on_generated_instances() {
    for seed in ["1", "2", "5"] {
        let (c, price, _a) = run_report(&["price", "--seed", seed]);
        assert_eq!(c, 0);
        let (c, hedge, _b) = run_report(&["hedge", "--seed", seed]);
        assert_eq!(c, 0);
        assert!((num(&price, "value") - num(&hedge, "value")).abs() < 1e-7);
        assert_eq!(price["config_hash"], hedge["config_hash"]);
    }
}

#[test]
fn hedge_of_the_gap_scenario_covers_the_lifted_value() {
    let path = config("gap_demo_scenario.json");
    let (c, rep, _d) = run_report(&["hedge", "--config", path.to_str().unwrap()]);
    assert_eq!(c, 0);
    assert!(num(&rep, "value") >= 0.0875 - 1e-7);
}

#[test]
fn gap_demo_defaults_and_eps_correction() {
    let (c, rep, dir) = run_report(&["gap-demo", "--eps", "0.1"]);
    assert_eq!(c, 0);
    assert!((num(&rep, "static_value") - 0.075).abs() < 1e-7);
    assert!((num(&rep, "lifted_value") - 0.0875).abs() < 1e-7);
    assert!((num(&rep, "gap") - 0.0125).abs() < 1e-7);
    let corr = &rep["result"]["eps_correction"];
    let modified = corr["modified_value"].as_f64().unwrap();
    let predicted = corr["predicted"].as_f64().unwrap();
    assert!((modified - predicted).abs() < 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("chain.csv")).unwrap();
    assert!(csv.contains("static_primal"));
}

#[test]
fn gap_demo_without_the_option_collapses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"include_option": false}"#).unwrap();
    let (c, rep, _d) = run_report(&["gap-demo", "--config", cfg.to_str().unwrap()]);
    assert_eq!(c, 0);
    let chain = &rep["result"]["chain"];
    let top = chain["pi_a"].as_f64().unwrap();
    for key in ["pi_hat", "lifted_primal", "enlarged_primal", "static_primal"] {
        assert!((chain[key].as_f64().unwrap() - top).abs() < 1e-7, "{key}");
    }
}

#[test]
fn chain_on_the_gap_scenario_orders_the_values() {
    let path = config("gap_demo_scenario.json");
    let (c, rep, _d) = run_report(&["chain", "--config", path.to_str().unwrap()]);
    assert_eq!(c, 0);
    assert_eq!(rep["result"]["ordering_ok"], true);
    assert!((num(&rep, "static_primal") - 0.075).abs() < 1e-7);
    assert!((num(&rep, "lifted_primal") - 0.0875).abs() < 1e-7);
}

#[test]
fn decompose_recovers_rules_exactly() {
    let path = config("decompose_rule.json");
    let (c, rep, dir) = run_report(&["decompose", "--config", path.to_str().unwrap()]);
    assert_eq!(c, 0);
    assert!(num(&rep, "max_reconstruction_error") <= 1e-12);
    assert!(dir.path().join("azema.csv").exists());
}

#[test]
fn decompose_flags_the_anticipating_test() {
    let path = config("decompose_random_time.json");
    let (c, rep, _d) = run_report(&["decompose", "--config", path.to_str().unwrap(), "--eps", "0.05"]);
    assert_eq!(c, 0);
    assert!(num(&rep, "max_reconstruction_error") <= 1e-10);
    let tests = rep["result"]["path_tests"].as_array().unwrap();
    let anticipating = tests.iter().find(|t| t["name"] == "constant_path").unwrap();
    assert_eq!(anticipating["adapted"], false);
    assert_eq!(anticipating["expected_failure"], true);
    let adapted = tests.iter().find(|t| t["name"] == "x_squared").unwrap();
    assert!(adapted["error"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn decompose_generated_measure() {
    let (c, rep, _d) = run_report(&["decompose", "--seed", "9", "--eps", "0.01"]);
    assert_eq!(c, 0);
    assert!(num(&rep, "max_reconstruction_error") <= 1e-10);
    assert_eq!(rep["result"]["preservation"]["martingale_violations"], 0);
}

#[test]
fn exhausted_survival_without_floor_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("decompose_rule.json")).unwrap();
    let failing = dir.path().join("fail.json");
    std::fs::write(&failing, text.replace("\"continue\"", "\"fail\"")).unwrap();
    let out = robam(&["decompose", "--config", failing.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let out = robam(&["decompose", "--config", failing.to_str().unwrap(), "--eps", "0.01"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn integrate_writes_convergence_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("int.json");
    std::fs::write(&cfg, r#"{"level": 12, "num_seeds": 4}"#).unwrap();
    let (c, rep, out) = run_report(&["integrate", "--config", cfg.to_str().unwrap(), "--strict-integration", "--seed", "3"]);
    assert_eq!(c, 0);
    assert!(num(&rep, "max_ito_residual") <= 1e-12);
    assert_eq!(num(&rep, "max_telescoping_residual"), 0.0);
    assert_eq!(rep["config"]["strict"], true);
    assert_eq!(rep["config"]["seed"], 3);
    let conv = std::fs::read_to_string(out.path().join("convergence.csv")).unwrap();
    assert!(conv.starts_with("level,sup_distance"));
    let beta = std::fs::read_to_string(out.path().join("beta_trace.csv")).unwrap();
    assert!(beta.starts_with("t,estimate,expected"));
}

#[test]
fn exit_codes() {
    let infeasible = config("infeasible_band.json");
    assert_eq!(code(&robam(&["price", "--config", infeasible.to_str().unwrap()])), 2);

    let gap = config("gap_demo_scenario.json");
    assert_eq!(code(&robam(&["chain", "--config", gap.to_str().unwrap(), "--rule-cap", "2"])), 3);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&robam(&["price", "--config", bad.to_str().unwrap()])), 4);
    let text = std::fs::read_to_string(config("constant.json")).unwrap();
    std::fs::write(&bad, text.replace("\"schema_version\": 1", "\"schema_version\": 2")).unwrap();
    assert_eq!(code(&robam(&["price", "--config", bad.to_str().unwrap()])), 4);
    std::fs::write(&bad, text.replace("\"constant\"", "\"no_such_payoff\"")).unwrap();
    assert_eq!(code(&robam(&["price", "--config", bad.to_str().unwrap()])), 4);
    assert_eq!(code(&robam(&["price", "--config", "/definitely/missing.json"])), 4);

    let out = Command::new(env!("CARGO_BIN_EXE_robam"))
        .args(["gap-demo"])
        .env("ROBAM_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);
}

#[test]
fn reports_are_reproducible() {
    let strip = |mut v: Value| {
        v["timing"] = Value::Null;
        v["workers"] = Value::Null;
        v
    };
    for args in [&["chain", "--seed", "4"][..], &["gap-demo"][..], &["decompose", "--seed", "2", "--eps", "0.01"][..]] {
        let (_, a, _d1) = run_report(args);
        let (_, b, _d2) = run_report(args);
        assert_eq!(strip(a), strip(b), "{args:?}");
    }
}

#[test]
fn stdout_report_without_out_dir() {
    let out = robam(&["price", "--config", config("constant.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["workers"], 2);
}
