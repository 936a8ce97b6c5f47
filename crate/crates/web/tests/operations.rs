use robust_american_web::{azema_profile, gap_demo, gap_demo_json, pathwise_trace, pathwise_trace_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).expect("valid JSON")
}

#[test]
fn gap_demo_reports_both_values() {
    let v = gap_demo_json(0.2, 0.05, 0.25, true, None).unwrap();
    assert!((v["static_value"].as_f64().unwrap() - 0.075).abs() < 1e-7);
    assert!((v["lifted_value"].as_f64().unwrap() - 0.0875).abs() < 1e-7);
}

#[test]
fn gap_demo_export_encodes_errors() {
    let v = parse(&gap_demo(-1.0, 0.05, 0.25, true, 0.0));
    assert!(v["error"].is_string(), "{v}");
    let v = parse(&gap_demo(0.2, 0.05, 0.25, true, 0.1));
    assert!(v["eps_correction"]["eps"].as_f64().unwrap() == 0.1);
}

#[test]
fn pathwise_trace_tracks_the_regime_switch() {
    let v = pathwise_trace_json(7, 14, 0.2, 0.4, 6).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert!(rows.len() > 32);
    assert_eq!(rows[0]["qv"], 0.0);
    assert!(rows[0]["beta"].is_null());
    let qv = v["qv_total"].as_f64().unwrap();
    assert!((qv - 0.1).abs() < 0.01, "{qv}");
    let qvs: Vec<f64> = rows.iter().map(|r| r["qv"].as_f64().unwrap()).collect();
    assert!(qvs.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn pathwise_trace_rejects_large_levels() {
    assert!(parse(&pathwise_trace(0, 20, 0.2, 0.4, 6))["error"].is_string());
    assert!(parse(&pathwise_trace(0, 6, 0.2, 0.4, 6))["error"].is_string());
}

#[test]
fn azema_profile_on_the_bundled_rule() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/decompose_rule.json")).unwrap();
    let v = parse(&azema_profile(&text, 0.0));
    assert!(v["max_reconstruction_error"].as_f64().unwrap() <= 1e-12, "{v}");
    assert_eq!(v["martingale_violations"], 0);
    assert!(!v["rows"].as_array().unwrap().is_empty());
    assert!(parse(&azema_profile("{", 0.0))["error"].is_string());
}
