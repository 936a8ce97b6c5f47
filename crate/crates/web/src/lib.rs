//! Browser front end: three operations exported through `wasm-bindgen`, each
//! taking plain arguments and returning a JSON string. Failures come back as
//! `{"error": "..."}` so the page never has to catch exceptions.
//!
//! The `*_json` functions hold the logic and run natively as well.

use robust_american::gap_demo::{run_gap_demo, GapDemoConfig};
use robust_american::pathwise::{beta_limsup, quadratic_variation, sample_diffusion, Increments};
use robust_american::scenario::{azema_rows, DecomposeInput};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

/// Largest resolution the page accepts; keeps the browser responsive.
pub const MAX_WEB_LEVEL: u32 = 16;
const TRACE_POINTS: usize = 64;

fn render(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn describe(e: robust_american::Error) -> String {
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(&e);
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    msg
}

pub fn gap_demo_json(u: f64, p: f64, delta: f64, include_option: bool, eps: Option<f64>) -> Result<Value, String> {
    let cfg = GapDemoConfig {
        u,
        p,
        delta,
        include_option,
        eps,
        ..GapDemoConfig::default()
    };
    let report = run_gap_demo(&cfg).map_err(describe)?;
    serde_json::to_value(report).map_err(|e| e.to_string())
}

/// A path whose volatility switches from `sigma_before` to `sigma_after` at
/// `t = 1/2`, with its running quadratic variation and the beta estimate.
pub fn pathwise_trace_json(seed: u64, level: u32, sigma_before: f64, sigma_after: f64, window: u32) -> Result<Value, String> {
    if level > MAX_WEB_LEVEL {
        return Err(format!("level {level} exceeds the page limit {MAX_WEB_LEVEL}"));
    }
    if window >= level {
        return Err(format!("window {window} must be below level {level}"));
    }
    let sigma = |t: f64, _: &[f64]| if t < 0.5 { sigma_before } else { sigma_after };
    let path = sample_diffusion(seed, sigma, level, 0.0, Increments::Gaussian).map_err(describe)?;
    let qv = quadratic_variation(&path, level).map_err(describe)?;
    let n = 1usize << level;
    let stride = (n / TRACE_POINTS).max(1);
    let mut rows = Vec::new();
    for k in (0..=n).step_by(stride) {
        let t = k as f64 / n as f64;
        let beta = beta_limsup(&qv, t, window).ok().map(|b| b[0]);
        let expected = if t <= 0.5 { sigma_before * sigma_before } else { sigma_after * sigma_after };
        rows.push(json!({
            "t": t,
            "x": path.values[k][0],
            "qv": qv.scalar(k),
            "beta": beta,
            "expected_beta": expected,
        }));
    }
    let total = 0.5 * (sigma_before * sigma_before + sigma_after * sigma_after);
    Ok(json!({
        "level": level,
        "window": window,
        "qv_total": qv.scalar(n),
        "qv_expected": total,
        "converged": qv.converged,
        "rows": rows,
    }))
}

/// Runs a decomposition input document and returns the Azéma table with the
/// reconstruction diagnostics.
pub fn azema_profile_json(input: &str, eps: Option<f64>) -> Result<Value, String> {
    let input = DecomposeInput::from_json(input).map_err(describe)?;
    let (report, tree) = input.run(eps).map_err(describe)?;
    Ok(json!({
        "eps_applied": report.eps_applied,
        "num_paths": report.num_paths,
        "max_reconstruction_error": report.max_reconstruction_error,
        "martingale_violations": report.preservation.martingale_violations,
        "path_tests": report.path_tests,
        "rows": azema_rows(&tree, &report.azema),
    }))
}

fn optional(x: f64) -> Option<f64> {
    (x.is_finite() && x > 0.0).then_some(x)
}

/// `eps <= 0` or `NaN` means no modification.
#[wasm_bindgen]
pub fn gap_demo(u: f64, p: f64, delta: f64, include_option: bool, eps: f64) -> String {
    render(gap_demo_json(u, p, delta, include_option, optional(eps)))
}

#[wasm_bindgen]
pub fn pathwise_trace(seed: u32, level: u32, sigma_before: f64, sigma_after: f64, window: u32) -> String {
    render(pathwise_trace_json(seed as u64, level, sigma_before, sigma_after, window))
}

#[wasm_bindgen]
pub fn azema_profile(input: &str, eps: f64) -> String {
    render(azema_profile_json(input, optional(eps)))
}
