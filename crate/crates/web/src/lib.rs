//! wasm-bindgen surface for the static demo page in `www/`.

mod demo;

use wasm_bindgen::prelude::*;

pub use demo::{
    pool_demo as pool_demo_json, schedule_json as schedule_demo_json, softmax_demo, synthetic_frame,
};

/// Pyramid schedule for `n_frames` as JSON.
#[wasm_bindgen]
pub fn schedule(
    n_frames: usize,
    base_length: usize,
    levels: usize,
    grid_m: usize,
    grid_n: usize,
) -> Result<String, JsError> {
    demo::schedule_json(n_frames, base_length, levels, grid_m, grid_n).map_err(|e| JsError::new(&e))
}

/// Norm maps of a synthetic frame before and after norm-weighted and average pooling, as JSON.
#[wasm_bindgen]
pub fn pool(
    size: usize,
    channels: usize,
    seed: u32,
    beta: f64,
    norm_order: f64,
    kernel: usize,
) -> Result<String, JsError> {
    demo::pool_demo(size, channels, seed, beta, norm_order, kernel).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn window_weights(norms: Vec<f64>, beta: f64) -> Result<Vec<f64>, JsError> {
    demo::softmax_demo(&norms, beta).map_err(|e| JsError::new(&e))
}
