//! Dense token tensors and the numeric primitives shared by the temporal
//! gridding and spatial pooling stages.
//!
//! Storage is row-major `f32`. Every reduction (norms, interpolation,
//! weighted sums) accumulates in `f64` and rounds once on store.

use crate::error::{Error, Result};

fn check_finite(data: &[f32]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// A single frame-shaped token map of `height x width` tokens, each a
/// vector of `channels` values.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl TokenGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "grid dimensions must be >= 1, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "grid {height}x{width}x{channels} needs {expected} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Grid with every channel vector equal to `token`.
    pub fn filled(height: usize, width: usize, token: &[f32]) -> Result<Self> {
        let data = token.repeat(height * width);
        Self::new(height, width, token.len(), data)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for h in 0..height {
            for w in 0..width {
                for c in 0..channels {
                    data.push(f(h, w, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    // Caller guarantees shape and finiteness.
    pub(crate) fn from_parts(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Channel vector at `(h, w)`.
    pub fn token(&self, h: usize, w: usize) -> &[f32] {
        let start = (h * self.width + w) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Copy out the `height x width` block whose top-left token is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<TokenGrid> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::Shape(format!(
                "crop {height}x{width} at ({top}, {left}) outside {}x{} grid",
                self.height, self.width
            )));
        }
        let row_len = width * self.channels;
        let mut data = Vec::with_capacity(height * row_len);
        for h in top..top + height {
            let start = (h * self.width + left) * self.channels;
            data.extend_from_slice(&self.data[start..start + row_len]);
        }
        Ok(Self::from_parts(height, width, self.channels, data))
    }
}

/// A sequence of `n_frames` token grids sharing one `(height, width, channels)` shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTokens {
    n_frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FrameTokens {
    pub fn new(
        n_frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if n_frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "tensor dimensions must be >= 1, got {n_frames}x{height}x{width}x{channels}"
            )));
        }
        let expected = n_frames * height * width * channels;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "tensor {n_frames}x{height}x{width}x{channels} needs {expected} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            n_frames,
            height,
            width,
            channels,
            data,
        })
    }

    /// Stack frames in order. All frames must share one shape.
    pub fn from_frames(frames: Vec<TokenGrid>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Shape("need at least one frame".into()))?;
        let (height, width, channels) = first.dims();
        let n_frames = frames.len();
        let mut data = Vec::with_capacity(n_frames * height * width * channels);
        for (i, frame) in frames.into_iter().enumerate() {
            if frame.dims() != (height, width, channels) {
                return Err(Error::Shape(format!(
                    "frame {i} is {:?}, expected {:?}",
                    frame.dims(),
                    (height, width, channels)
                )));
            }
            data.extend_from_slice(&frame.data);
        }
        Ok(Self {
            n_frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub(crate) fn from_parts(
        n_frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(data.len(), n_frames * height * width * channels);
        Self {
            n_frames,
            height,
            width,
            channels,
            data,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(n_frames, height, width, channels)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n_frames, self.height, self.width, self.channels)
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Raw values of frame `i`.
    pub fn frame_slice(&self, i: usize) -> &[f32] {
        let len = self.frame_len();
        &self.data[i * len..(i + 1) * len]
    }

    /// Owned copy of frame `i`.
    pub fn frame(&self, i: usize) -> Result<TokenGrid> {
        if i >= self.n_frames {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_frames,
            });
        }
        Ok(TokenGrid::from_parts(
            self.height,
            self.width,
            self.channels,
            self.frame_slice(i).to_vec(),
        ))
    }

    pub fn frames(&self) -> impl Iterator<Item = TokenGrid> + '_ {
        self.data
            .chunks_exact(self.frame_len())
            .map(|c| TokenGrid::from_parts(self.height, self.width, self.channels, c.to_vec()))
    }
}

// ── Norms ──────────────────────────────────────────────────────────

/// Lp norm `(sum |v_i|^p)^(1/p)` accumulated in `f64`.
pub fn lp_norm(vector: &[f32], p: f64) -> Result<f64> {
    if !(1.0..f64::INFINITY).contains(&p) {
        return Err(Error::InvalidNormOrder(p));
    }
    check_finite(vector)?;
    Ok(lp_norm_unchecked(vector, p))
}

/// `lp_norm` without validation; `p >= 1` and finite input are the caller's job.
pub(crate) fn lp_norm_unchecked(vector: &[f32], p: f64) -> f64 {
    if p == 2.0 {
        let sum: f64 = vector.iter().map(|&x| (x as f64) * (x as f64)).sum();
        sum.sqrt()
    } else if p == 1.0 {
        vector.iter().map(|&x| (x as f64).abs()).sum()
    } else {
        let sum: f64 = vector.iter().map(|&x| (x as f64).abs().powf(p)).sum();
        if sum.is_finite() {
            sum.powf(p.recip())
        } else {
            // |x|^p overflowed f64; rescale by the largest magnitude.
            let scale = vector.iter().fold(0.0f64, |m, &x| m.max((x as f64).abs()));
            let sum: f64 = vector
                .iter()
                .map(|&x| ((x as f64).abs() / scale).powf(p))
                .sum();
            scale * sum.powf(p.recip())
        }
    }
}

/// Per-position Lp norms of `frame`, row-major `height x width`.
pub fn token_norm_map(frame: &TokenGrid, p: f64) -> Result<Vec<f64>> {
    if !(1.0..f64::INFINITY).contains(&p) {
        return Err(Error::InvalidNormOrder(p));
    }
    Ok(norm_map_slice(&frame.data, frame.channels, p))
}

pub(crate) fn norm_map_slice(data: &[f32], channels: usize, p: f64) -> Vec<f64> {
    data.chunks_exact(channels)
        .map(|t| lp_norm_unchecked(t, p))
        .collect()
}

// ── Resampling ─────────────────────────────────────────────────────

/// Source sample positions for one axis under half-pixel mapping:
/// `(lower index, upper index, upper weight)` per destination index.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, x - lo as f64)
        })
        .collect()
}

/// Channel-wise bilinear resize with half-pixel coordinate mapping and
/// edge clamping. Equal source and target dimensions return the input unchanged.
pub fn bilinear_resize(grid: &TokenGrid, target_h: usize, target_w: usize) -> Result<TokenGrid> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Shape(format!(
            "resize target must be >= 1x1, got {target_h}x{target_w}"
        )));
    }
    if (target_h, target_w) == (grid.height, grid.width) {
        return Ok(grid.clone());
    }
    let ch = grid.channels;
    let rows = axis_taps(grid.height, target_h);
    let cols = axis_taps(grid.width, target_w);
    let mut out = Vec::with_capacity(target_h * target_w * ch);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let a = grid.token(y0, x0);
            let b = grid.token(y0, x1);
            let c = grid.token(y1, x0);
            let d = grid.token(y1, x1);
            for k in 0..ch {
                let top = (1.0 - fx) * a[k] as f64 + fx * b[k] as f64;
                let bottom = (1.0 - fx) * c[k] as f64 + fx * d[k] as f64;
                out.push(((1.0 - fy) * top + fy * bottom) as f32);
            }
        }
    }
    Ok(TokenGrid::from_parts(target_h, target_w, ch, out))
}

/// Tile `m * n` equally shaped grids into an `(n*H) x (m*W)` grid.
/// Element `k` lands in block row `k / m`, block column `k % m`.
pub fn spatial_concat(grids: &[&TokenGrid], m: usize, n: usize) -> Result<TokenGrid> {
    if m == 0 || n == 0 {
        return Err(Error::Shape(format!(
            "grid layout must be >= 1x1, got m={m}, n={n}"
        )));
    }
    if grids.len() != m * n {
        return Err(Error::Shape(format!(
            "expected {} grids for m={m}, n={n}, got {}",
            m * n,
            grids.len()
        )));
    }
    let (h, w, ch) = grids[0].dims();
    if let Some(bad) = grids.iter().position(|g| g.dims() != (h, w, ch)) {
        return Err(Error::Shape(format!(
            "grid {bad} is {:?}, expected {:?}",
            grids[bad].dims(),
            (h, w, ch)
        )));
    }
    let out_w = m * w;
    let row_len = w * ch;
    let mut out = Vec::with_capacity(n * h * out_w * ch);
    for block_row in 0..n {
        for y in 0..h {
            for block_col in 0..m {
                let g = grids[block_row * m + block_col];
                out.extend_from_slice(&g.data[y * row_len..(y + 1) * row_len]);
            }
        }
    }
    Ok(TokenGrid::from_parts(n * h, out_w, ch, out))
}
