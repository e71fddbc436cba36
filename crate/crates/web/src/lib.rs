//! Browser demo: CSV text in, JSON out. The [`api`] module does the work and
//! is plain Rust; the `#[wasm_bindgen]` functions below only adapt errors.

pub mod api;

use wasm_bindgen::prelude::*;

fn js(e: pre_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Cross-validation curve and selected terms for one Lasso method.
#[wasm_bindgen]
pub fn cv_curve(csv: &str, request: &str) -> Result<String, JsError> {
    api::cv_curve(csv, request).map_err(js)
}

/// One full iteration of every method on the same split.
#[wasm_bindgen]
pub fn compare_methods(csv: &str, request: &str) -> Result<String, JsError> {
    api::compare_methods(csv, request).map_err(js)
}

/// Oracle-labelled generated data: marginal summaries and a preview.
#[wasm_bindgen]
pub fn generate_preview(csv: &str, request: &str) -> Result<String, JsError> {
    api::generate_preview(csv, request).map_err(js)
}
