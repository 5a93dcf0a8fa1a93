//! Browser bindings: fit a charging curve, build a wear function, solve a
//! small generated instance. Each operation takes and returns JSON text.

use evcs_core::battery::{build_charging_function, build_wdf, CcCvParams, DodAccCurve};
use evcs_core::bnp::{self, BnpConfig};
use evcs_core::instgen::{generate_tiny, TinyParams};
use serde::Deserialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// CC-CV parameters in, fitted charging-function breakpoints out.
pub fn fit_charging_curve(params_json: &str, segments: usize) -> Result<String, String> {
    let p: CcCvParams = serde_json::from_str(params_json).map_err(err)?;
    let phi = build_charging_function(&p, segments).map_err(err)?;
    Ok(json!({ "points": phi.pwl().to_pairs(), "avg_rate": phi.avg_rate() }).to_string())
}

/// DoD-ACC curve in, cumulative wear breakpoints and densities out.
pub fn wear_function(curve_json: &str) -> Result<String, String> {
    let c: DodAccCurve = serde_json::from_str(curve_json).map_err(err)?;
    let w = build_wdf(&c).map_err(err)?;
    Ok(json!({ "points": w.cumulative().to_pairs(), "densities": w.densities() }).to_string())
}

#[derive(Deserialize)]
#[serde(default)]
struct SolveRequest {
    seed: u64,
    vehicles: usize,
    periods: usize,
    capacity: u32,
    time_limit_s: f64,
}

impl Default for SolveRequest {
    fn default() -> Self {
        Self { seed: 0, vehicles: 2, periods: 10, capacity: 1, time_limit_s: 10.0 }
    }
}

/// Generates a tiny instance and solves it; returns instance, stats and schedules.
pub fn solve_small(request_json: &str) -> Result<String, String> {
    let r: SolveRequest = serde_json::from_str(request_json).map_err(err)?;
    if r.vehicles > 4 || r.periods > 24 {
        return Err("demo instances are limited to 4 vehicles and 24 periods".into());
    }
    let p = TinyParams { vehicles: r.vehicles, periods: r.periods, capacity: r.capacity, ..TinyParams::default() };
    let inst = generate_tiny(&p, r.seed).map_err(err)?;
    let cfg = BnpConfig { time_limit_s: r.time_limit_s, ..BnpConfig::default() };
    let res = bnp::solve(&inst, &cfg).map_err(err)?;
    let instance: serde_json::Value = serde_json::from_str(&inst.to_json()).map_err(err)?;
    Ok(json!({ "instance": instance, "stats": res.stats, "solution": res.solution }).to_string())
}

#[wasm_bindgen(js_name = fitChargingCurve)]
pub fn fit_charging_curve_js(params_json: &str, segments: usize) -> Result<String, JsValue> {
    fit_charging_curve(params_json, segments).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = wearFunction)]
pub fn wear_function_js(curve_json: &str) -> Result<String, JsValue> {
    wear_function(curve_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = solveSmall)]
pub fn solve_small_js(request_json: &str) -> Result<String, JsValue> {
    solve_small(request_json).map_err(|e| JsValue::from_str(&e))
}
