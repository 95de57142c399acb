//! WebAssembly bindings for the browser demo. Every entry point takes and
//! returns JSON so the page needs no generated glue beyond wasm-bindgen's.

pub mod demo;

use wasm_bindgen::prelude::*;

fn bridge(result: Result<String, String>) -> Result<String, JsValue> {
    result.map_err(|e| JsValue::from_str(&e))
}

/// Simulates an AR(1) series with one change and scans it.
#[wasm_bindgen]
pub fn simulate_and_scan(request: &str) -> Result<String, JsValue> {
    bridge(demo::simulate_and_scan(request))
}

/// Gumbel critical values and raw thresholds.
#[wasm_bindgen]
pub fn critical_values(request: &str) -> Result<String, JsValue> {
    bridge(demo::critical_values(request))
}

/// Simulates a piecewise AR(1) series and runs binary segmentation.
#[wasm_bindgen]
pub fn segment(request: &str) -> Result<String, JsValue> {
    bridge(demo::segment(request))
}
