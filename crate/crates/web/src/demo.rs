//! Plain-Rust halves of the browser operations, returning JSON strings so
//! they can be tested natively.

use serde::Serialize;
use stgridpool::nsp::softmax_weights;
use stgridpool::{
    average_pool_reference, build_schedule, pool_frame, token_budget, token_norm_map, GridSpec,
    PoolConfig, PtgConfig, StGridPoolConfig, TokenGrid,
};

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

pub fn schedule_json(
    n_frames: usize,
    base_length: usize,
    levels: usize,
    grid_m: usize,
    grid_n: usize,
) -> Result<String, String> {
    let cfg = PtgConfig {
        base_length,
        levels,
        grid: GridSpec {
            m: grid_m,
            n: grid_n,
        },
    };
    let schedule = build_schedule(n_frames, &cfg).map_err(|e| e.to_string())?;
    #[derive(Serialize)]
    struct Out<'a> {
        schedule: &'a stgridpool::PyramidSchedule,
        update_indices: Vec<usize>,
        summaries: usize,
    }
    to_json(&Out {
        update_indices: schedule.update_indices(),
        summaries: schedule.summary_count(),
        schedule: &schedule,
    })
}

/// Deterministic frame with an elliptical salient blob: tokens inside have
/// norm near 2, background near 1, directions pseudo-random.
pub fn synthetic_frame(size: usize, channels: usize, seed: u32) -> Result<TokenGrid, String> {
    let mut state = seed as u64 ^ 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let cy = size as f64 * (0.35 + 0.3 * (next() * 0.5 + 0.5));
    let cx = size as f64 * (0.35 + 0.3 * (next() * 0.5 + 0.5));
    let (ry, rx) = (size as f64 * 0.22, size as f64 * 0.3);
    let mut data = Vec::with_capacity(size * size * channels);
    for y in 0..size {
        for x in 0..size {
            let dy = (y as f64 + 0.5 - cy) / ry;
            let dx = (x as f64 + 0.5 - cx) / rx;
            let salient = dy * dy + dx * dx <= 1.0;
            let dir: Vec<f64> = (0..channels).map(|_| next()).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
            let scale = if salient { 2.0 } else { 1.0 } + 0.15 * next();
            data.extend(dir.iter().map(|v| (v / len * scale) as f32));
        }
    }
    TokenGrid::new(size, size, channels, data).map_err(|e| e.to_string())
}

#[derive(Serialize)]
pub struct PoolDemo {
    pub in_size: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub input_norms: Vec<f64>,
    pub weighted_norms: Vec<f64>,
    pub average_norms: Vec<f64>,
    pub ratio: f64,
}

/// Pool a synthetic frame with norm weighting and with plain averaging, and
/// report the L2 norm maps of input and both outputs.
pub fn pool_demo(
    size: usize,
    channels: usize,
    seed: u32,
    beta: f64,
    norm_order: f64,
    kernel: usize,
) -> Result<String, String> {
    let frame = synthetic_frame(size, channels, seed)?;
    let pool = PoolConfig::square(kernel, beta, norm_order);
    let weighted = pool_frame(&frame, &pool).map_err(|e| e.to_string())?;
    let average = average_pool_reference(&frame, (kernel, kernel), (kernel, kernel))
        .map_err(|e| e.to_string())?;
    let cfg = StGridPoolConfig {
        pool,
        ptg_enabled: false,
        ..Default::default()
    };
    let budget = token_budget(1, size, size, &cfg).map_err(|e| e.to_string())?;
    let norms = |g: &TokenGrid| token_norm_map(g, 2.0).map_err(|e| e.to_string());
    to_json(&PoolDemo {
        in_size: size,
        out_h: weighted.height(),
        out_w: weighted.width(),
        input_norms: norms(&frame)?,
        weighted_norms: norms(&weighted)?,
        average_norms: norms(&average)?,
        ratio: budget.ratio,
    })
}

/// Softmax weights of `beta * norm` for a window of norms.
pub fn softmax_demo(norms: &[f64], beta: f64) -> Result<Vec<f64>, String> {
    softmax_weights(norms, beta).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_round_trips_through_json() {
        let text = schedule_json(32, 8, 3, 2, 2).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["update_indices"], serde_json::json!([7, 15, 23, 31]));
        assert_eq!(v["summaries"], 7);
        assert_eq!(v["schedule"]["levels"][1]["segments"][1]["start"], 16);
        assert!(schedule_json(0, 8, 3, 2, 2).is_err());
    }

    #[test]
    fn pool_demo_shapes_and_salience() {
        let text = pool_demo(24, 16, 3, 2.0, 2.0, 2).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["out_h"], 12);
        assert_eq!(v["input_norms"].as_array().unwrap().len(), 24 * 24);
        assert_eq!(v["weighted_norms"].as_array().unwrap().len(), 144);
        assert_eq!(v["ratio"], 0.25);
        let sum = |k: &str| {
            v[k].as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .sum::<f64>()
        };
        assert!(sum("weighted_norms") > sum("average_norms"));
        assert!(pool_demo(1, 4, 0, 1.0, 2.0, 2).is_err());
    }

    #[test]
    fn synthetic_blob_has_higher_norms() {
        let g = synthetic_frame(20, 8, 1).unwrap();
        let norms = token_norm_map(&g, 2.0).unwrap();
        let high = norms.iter().filter(|&&n| n > 1.5).count();
        assert!(high > 20 && high < 300);
    }

    #[test]
    fn softmax_matches_closed_form() {
        let w = softmax_demo(&[1.0, 2.0], 1.0).unwrap();
        assert!((w[0] - 1.0 / (1.0 + 1f64.exp())).abs() < 1e-12);
        assert!(softmax_demo(&[], 1.0).is_err());
    }
}
