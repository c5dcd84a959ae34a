//! Norm-based spatial pooling.
//!
//! Each valid (unpadded) sliding window is reduced to one token: a convex
//! combination of its members weighted by `softmax(beta * ||t||_p)` over the
//! window. `beta = 0` degenerates to plain average pooling; large `beta`
//! approaches picking the max-norm token.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{lp_norm, norm_map_slice, FrameTokens, TokenGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    /// Softmax temperature applied to token norms.
    pub beta: f64,
    pub norm_order: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            kernel_h: 2,
            kernel_w: 2,
            stride_h: 2,
            stride_w: 2,
            beta: 1.0,
            norm_order: 2.0,
        }
    }
}

impl PoolConfig {
    /// Square kernel with stride equal to the kernel.
    pub fn square(size: usize, beta: f64, norm_order: f64) -> Self {
        Self {
            kernel_h: size,
            kernel_w: size,
            stride_h: size,
            stride_w: size,
            beta,
            norm_order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::Config(format!(
                "kernel must be >= 1x1, got {}x{}",
                self.kernel_h, self.kernel_w
            )));
        }
        if self.stride_h == 0 || self.stride_w == 0 {
            return Err(Error::Config(format!(
                "stride must be >= 1x1, got {}x{}",
                self.stride_h, self.stride_w
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::Config(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if !(1.0..f64::INFINITY).contains(&self.norm_order) {
            return Err(Error::InvalidNormOrder(self.norm_order));
        }
        Ok(())
    }

    /// Valid-window output size for an `height x width` frame.
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        pooled_dims(
            height,
            width,
            (self.kernel_h, self.kernel_w),
            (self.stride_h, self.stride_w),
        )
    }
}

fn pooled_dims(
    height: usize,
    width: usize,
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
) -> Result<(usize, usize)> {
    if height < kh || width < kw {
        return Err(Error::FrameSmallerThanKernel {
            frame_h: height,
            frame_w: width,
            kernel_h: kh,
            kernel_w: kw,
        });
    }
    Ok(((height - kh) / sh + 1, (width - kw) / sw + 1))
}

/// Max-subtracted softmax of `beta * norm`.
pub fn softmax_weights(norms: &[f64], beta: f64) -> Result<Vec<f64>> {
    let scores: Vec<f64> = norms.iter().map(|&n| beta * n).collect();
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    Ok(weights)
}

/// Softmax-of-norm weights for one window of channel vectors.
pub fn window_weights(window: &[&[f32]], beta: f64, p: f64) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(Error::Shape("empty window".into()));
    }
    let norms = window
        .iter()
        .map(|t| lp_norm(t, p))
        .collect::<Result<Vec<_>>>()?;
    softmax_weights(&norms, beta)
}

/// Pool one row-major `height x width x channels` frame. Norms are computed
/// once per frame and shared by overlapping windows.
fn pool_slice(
    data: &[f32],
    height: usize,
    width: usize,
    channels: usize,
    config: &PoolConfig,
) -> Result<Vec<f32>> {
    let (out_h, out_w) = config.output_dims(height, width)?;
    let norms = norm_map_slice(data, channels, config.norm_order);
    let window_len = config.kernel_h * config.kernel_w;
    let mut window_norms = Vec::with_capacity(window_len);
    let mut acc = vec![0.0f64; channels];
    let mut out = Vec::with_capacity(out_h * out_w * channels);
    for oh in 0..out_h {
        for ow in 0..out_w {
            let top = oh * config.stride_h;
            let left = ow * config.stride_w;
            window_norms.clear();
            for y in top..top + config.kernel_h {
                let row = y * width;
                window_norms.extend_from_slice(&norms[row + left..row + left + config.kernel_w]);
            }
            let weights = softmax_weights(&window_norms, config.beta)?;
            acc.fill(0.0);
            let mut k = 0;
            for y in top..top + config.kernel_h {
                for x in left..left + config.kernel_w {
                    let alpha = weights[k];
                    let start = (y * width + x) * channels;
                    for (a, &v) in acc.iter_mut().zip(&data[start..start + channels]) {
                        *a += alpha * v as f64;
                    }
                    k += 1;
                }
            }
            out.extend(acc.iter().map(|&a| a as f32));
        }
    }
    Ok(out)
}

pub fn pool_frame(frame: &TokenGrid, config: &PoolConfig) -> Result<TokenGrid> {
    config.validate()?;
    let (h, w, c) = frame.dims();
    let (out_h, out_w) = config.output_dims(h, w)?;
    let out = pool_slice(frame.as_slice(), h, w, c, config)?;
    Ok(TokenGrid::from_parts(out_h, out_w, c, out))
}

/// Pool every frame independently.
pub fn apply_nsp(tokens: &FrameTokens, config: &PoolConfig) -> Result<FrameTokens> {
    config.validate()?;
    let (n, h, w, c) = tokens.dims();
    let (out_h, out_w) = config.output_dims(h, w)?;
    let frame_len = tokens.frame_len();
    let frames = tokens.as_slice().chunks_exact(frame_len);

    #[cfg(feature = "parallel")]
    let pooled: Vec<Vec<f32>> = frames
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|f| pool_slice(f, h, w, c, config))
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let pooled: Vec<Vec<f32>> = frames
        .map(|f| pool_slice(f, h, w, c, config))
        .collect::<Result<_>>()?;

    Ok(FrameTokens::from_parts(n, out_h, out_w, c, pooled.concat()))
}

/// Unweighted window mean with the same geometry as [`pool_frame`].
pub fn average_pool_reference(
    frame: &TokenGrid,
    kernel: (usize, usize),
    stride: (usize, usize),
) -> Result<TokenGrid> {
    if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Config(format!(
            "kernel and stride must be >= 1x1, got kernel {kernel:?}, stride {stride:?}"
        )));
    }
    let (h, w, c) = frame.dims();
    let (out_h, out_w) = pooled_dims(h, w, kernel, stride)?;
    let count = (kernel.0 * kernel.1) as f64;
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for oh in 0..out_h {
        for ow in 0..out_w {
            let mut acc = vec![0.0f64; c];
            for y in oh * stride.0..oh * stride.0 + kernel.0 {
                for x in ow * stride.1..ow * stride.1 + kernel.1 {
                    for (a, &v) in acc.iter_mut().zip(frame.token(y, x)) {
                        *a += v as f64;
                    }
                }
            }
            out.extend(acc.iter().map(|&a| (a / count) as f32));
        }
    }
    Ok(TokenGrid::from_parts(out_h, out_w, c, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(h: usize, w: usize, vals: &[f32]) -> TokenGrid {
        TokenGrid::new(h, w, 1, vals.to_vec()).unwrap()
    }

    #[test]
    fn equal_norms_give_uniform_weights() {
        let a = [1.0f32, 0.0];
        let b = [0.0f32, -1.0];
        let w = window_weights(&[&a, &b, &a, &b], 3.7, 2.0).unwrap();
        for x in w {
            assert!((x - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_beta_gives_uniform_weights() {
        let w = window_weights(&[&[1.0], &[-7.0], &[30.0]], 0.0, 1.0).unwrap();
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_element_softmax() {
        let w = window_weights(&[&[1.0, 0.0], &[0.0, 2.0]], 1.0, 2.0).unwrap();
        let e1 = 1f64.exp();
        let e2 = 2f64.exp();
        assert!((w[0] - e1 / (e1 + e2)).abs() < 1e-12);
        assert!((w[1] - e2 / (e1 + e2)).abs() < 1e-12);
        assert!((w[0] - 0.26894).abs() < 1e-5 && (w[1] - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn weights_reject_bad_input() {
        assert!(window_weights(&[], 1.0, 2.0).is_err());
        assert!(window_weights(&[&[f32::NAN]], 1.0, 2.0).is_err());
        assert!(softmax_weights(&[1.0, 2.0], f64::INFINITY).is_err());
    }

    #[test]
    fn unit_kernel_is_identity() {
        let g =
            TokenGrid::from_fn(3, 5, 4, |h, w, c| (h * 31 + w * 7 + c) as f32 * 0.1 - 2.0).unwrap();
        let cfg = PoolConfig::square(1, 5.0, 3.0);
        assert_eq!(pool_frame(&g, &cfg).unwrap(), g);
    }

    #[test]
    fn constant_frame_pools_to_constant() {
        let g = TokenGrid::filled(4, 6, &[0.5, -1.0, 2.0]).unwrap();
        let out = pool_frame(&g, &PoolConfig::default()).unwrap();
        assert_eq!(out.dims(), (2, 3, 3));
        for v in out.as_slice().chunks(3) {
            assert!(
                (v[0] - 0.5).abs() < 1e-6 && (v[1] + 1.0).abs() < 1e-6 && (v[2] - 2.0).abs() < 1e-6
            );
        }
    }

    #[test]
    fn single_hot_token_window() {
        let g = single(2, 2, &[0.0, 0.0, 0.0, 4.0]);
        let out = pool_frame(&g, &PoolConfig::default()).unwrap();
        let e4 = 4f64.exp();
        let expected = (4.0 * e4 / (3.0 + e4)) as f32;
        assert_eq!(out.as_slice(), &[expected]);
        assert!((out.as_slice()[0] - 3.79166).abs() < 1e-4);
    }

    #[test]
    fn average_reference_examples() {
        let g = single(2, 2, &[0.0, 0.0, 0.0, 4.0]);
        assert_eq!(
            average_pool_reference(&g, (2, 2), (2, 2))
                .unwrap()
                .as_slice(),
            &[1.0]
        );
        let c = TokenGrid::filled(5, 5, &[3.25]).unwrap();
        let out = average_pool_reference(&c, (2, 3), (1, 2)).unwrap();
        assert_eq!(out.dims(), (4, 2, 1));
        assert!(out.as_slice().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn frame_smaller_than_kernel() {
        let g = single(1, 3, &[1.0, 2.0, 3.0]);
        let err = pool_frame(&g, &PoolConfig::default()).unwrap_err();
        assert!(err.to_string().starts_with("frame smaller than kernel"));
        assert!(average_pool_reference(&g, (2, 2), (2, 2)).is_err());
    }

    #[test]
    fn odd_sizes_use_valid_windows() {
        let g = TokenGrid::filled(5, 7, &[1.0]).unwrap();
        let out = pool_frame(&g, &PoolConfig::default()).unwrap();
        assert_eq!(out.dims(), (2, 3, 1));
        let cfg = PoolConfig {
            kernel_h: 3,
            kernel_w: 2,
            stride_h: 1,
            stride_w: 3,
            ..PoolConfig::default()
        };
        assert_eq!(cfg.output_dims(5, 7).unwrap(), (3, 2));
    }

    #[test]
    fn config_validation() {
        assert!(PoolConfig {
            kernel_h: 0,
            ..PoolConfig::default()
        }
        .validate()
        .is_err());
        assert!(PoolConfig {
            stride_w: 0,
            ..PoolConfig::default()
        }
        .validate()
        .is_err());
        assert!(PoolConfig {
            beta: -1.0,
            ..PoolConfig::default()
        }
        .validate()
        .is_err());
        assert!(PoolConfig {
            beta: f64::NAN,
            ..PoolConfig::default()
        }
        .validate()
        .is_err());
        assert!(PoolConfig {
            norm_order: 0.5,
            ..PoolConfig::default()
        }
        .validate()
        .is_err());
        assert!(PoolConfig::default().validate().is_ok());
    }

    #[test]
    fn apply_nsp_identical_frames() {
        let f = TokenGrid::from_fn(4, 4, 3, |h, w, c| ((h * 4 + w) * 3 + c) as f32 / 10.0).unwrap();
        let t = FrameTokens::from_frames(vec![f.clone(), f.clone(), f]).unwrap();
        let out = apply_nsp(&t, &PoolConfig::default()).unwrap();
        assert_eq!(out.dims(), (3, 2, 2, 3));
        assert_eq!(out.frame_slice(0), out.frame_slice(1));
        assert_eq!(out.frame_slice(1), out.frame_slice(2));
    }

    fn window_strategy() -> impl Strategy<Value = Vec<Vec<f32>>> {
        (1usize..10, 1usize..6).prop_flat_map(|(k, d)| {
            proptest::collection::vec(proptest::collection::vec(-5.0f32..5.0, d), k)
        })
    }

    proptest! {
        #[test]
        fn weights_normalized_and_positive(window in window_strategy(), beta in 0.0f64..20.0, p in 1.0f64..4.0) {
            let refs: Vec<&[f32]> = window.iter().map(Vec::as_slice).collect();
            let w = window_weights(&refs, beta, p).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
        }

        #[test]
        fn weights_are_permutation_equivariant(window in window_strategy(), beta in 0.0f64..10.0, rot in 0usize..10) {
            let refs: Vec<&[f32]> = window.iter().map(Vec::as_slice).collect();
            let w = window_weights(&refs, beta, 2.0).unwrap();
            let r = rot % refs.len();
            let mut rotated = refs.clone();
            rotated.rotate_left(r);
            let mut expected = w.clone();
            expected.rotate_left(r);
            let wr = window_weights(&rotated, beta, 2.0).unwrap();
            for (a, b) in wr.iter().zip(&expected) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn pooled_values_are_convex_combinations(
            h in 2usize..8, w in 2usize..8, c in 1usize..4, k in 1usize..3, s in 1usize..3,
            beta in 0.0f64..50.0, seed in any::<u32>(),
        ) {
            let g = TokenGrid::from_fn(h, w, c, |y, x, ch| {
                (((y * 131 + x * 17 + ch * 7) as u32 ^ seed) % 997) as f32 / 97.0 - 5.0
            }).unwrap();
            let cfg = PoolConfig { kernel_h: k, kernel_w: k, stride_h: s, stride_w: s, beta, norm_order: 2.0 };
            let out = pool_frame(&g, &cfg).unwrap();
            for oy in 0..out.height() {
                for ox in 0..out.width() {
                    for ch in 0..c {
                        let vals: Vec<f32> = (0..k).flat_map(|dy| (0..k).map(move |dx| (dy, dx)))
                            .map(|(dy, dx)| g.token(oy * s + dy, ox * s + dx)[ch]).collect();
                        let lo = vals.iter().copied().fold(f32::MAX, f32::min);
                        let hi = vals.iter().copied().fold(f32::MIN, f32::max);
                        let v = out.token(oy, ox)[ch];
                        prop_assert!(v.is_finite() && v >= lo && v <= hi);
                    }
                }
            }
        }
    }
}
