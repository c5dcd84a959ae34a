//! Pyramid temporal gridding.
//!
//! The frame sequence is split into `levels` layers of segments whose length
//! doubles per level (`K, 2K, 4K, ...`). For each segment, `m * n` frames are
//! sampled at a fixed stride, tiled into one large grid, resized back to the
//! frame resolution, and written over the segment's last frame.
//!
//! Levels are applied in ascending order and segments left to right; each
//! summary reads the sequence as already updated by every earlier segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{bilinear_resize, spatial_concat, FrameTokens, TokenGrid};

/// Frame-sampling grid: `m` block columns by `n` block rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
    pub n: usize,
}

impl GridSpec {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        let g = Self { m, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config(format!(
                "grid must be >= 1x1, got m={}, n={}",
                self.m, self.n
            )));
        }
        Ok(())
    }

    /// Frames sampled per summary.
    pub fn cells(&self) -> usize {
        self.m * self.n
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { m: 2, n: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PtgConfig {
    /// Level-1 segment length.
    pub base_length: usize,
    pub levels: usize,
    pub grid: GridSpec,
}

impl PtgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_length == 0 {
            return Err(Error::Config("base_length must be >= 1".into()));
        }
        if self.levels == 0 {
            return Err(Error::Config("levels must be >= 1".into()));
        }
        if self.levels > 48
            || self
                .base_length
                .checked_mul(1usize << (self.levels - 1))
                .is_none()
        {
            return Err(Error::Config(format!(
                "segment length base_length * 2^(levels-1) overflows (base_length={}, levels={})",
                self.base_length, self.levels
            )));
        }
        self.grid.validate()
    }

    /// Segment length at 1-based `level`.
    pub fn segment_length(&self, level: usize) -> usize {
        self.base_length << (level - 1)
    }
}

impl Default for PtgConfig {
    fn default() -> Self {
        Self {
            base_length: 8,
            levels: 3,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start: usize,
    /// Last frame of the segment, inclusive.
    pub span_end: usize,
    /// Frame overwritten by this segment's summary.
    pub update_index: usize,
    pub sample_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Level {
    /// 1-based.
    pub level: usize,
    pub segment_length: usize,
    pub segments: Vec<Segment>,
}

impl Level {
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PyramidSchedule {
    pub n_frames: usize,
    pub grid: GridSpec,
    pub levels: Vec<Level>,
}

impl PyramidSchedule {
    /// Segments in application order, tagged with their 1-based level.
    pub fn segments(&self) -> impl Iterator<Item = (usize, &Segment)> {
        self.levels
            .iter()
            .flat_map(|l| l.segments.iter().map(move |s| (l.level, s)))
    }

    pub fn summary_count(&self) -> usize {
        self.levels.iter().map(Level::segment_count).sum()
    }

    /// Sorted, deduplicated set of frames any level overwrites.
    pub fn update_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self.segments().map(|(_, s)| s.update_index).collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }
}

pub fn build_schedule(n_frames: usize, config: &PtgConfig) -> Result<PyramidSchedule> {
    if n_frames == 0 {
        return Err(Error::Shape("n_frames must be >= 1".into()));
    }
    config.validate()?;
    let cells = config.grid.cells();
    let levels = (1..=config.levels)
        .map(|level| {
            let len = config.segment_length(level);
            // short segments would give a zero stride; repeat trailing frames instead
            let step = (len / cells).max(1);
            let segments = (0..n_frames)
                .step_by(len)
                .map(|start| {
                    let span_end = start.saturating_add(len - 1).min(n_frames - 1);
                    let sample_indices = (0..cells)
                        .map(|k| start.saturating_add(k.saturating_mul(step)).min(span_end))
                        .collect();
                    Segment {
                        start,
                        span_end,
                        update_index: span_end,
                        sample_indices,
                    }
                })
                .collect();
            Level {
                level,
                segment_length: len,
                segments,
            }
        })
        .collect();
    Ok(PyramidSchedule {
        n_frames,
        grid: config.grid,
        levels,
    })
}

/// Tile the sampled frames per `grid` and resize back to the frame resolution.
pub fn summary_token(
    tokens: &FrameTokens,
    sample_indices: &[usize],
    grid: GridSpec,
) -> Result<TokenGrid> {
    grid.validate()?;
    if sample_indices.len() != grid.cells() {
        return Err(Error::Shape(format!(
            "grid {}x{} needs {} sample indices, got {}",
            grid.m,
            grid.n,
            grid.cells(),
            sample_indices.len()
        )));
    }
    let frames = sample_indices
        .iter()
        .map(|&i| tokens.frame(i))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&TokenGrid> = frames.iter().collect();
    let tiled = spatial_concat(&refs, grid.m, grid.n)?;
    bilinear_resize(&tiled, tokens.height(), tokens.width())
}

pub fn apply_ptg(
    tokens: &FrameTokens,
    schedule: &PyramidSchedule,
    grid: GridSpec,
) -> Result<FrameTokens> {
    if schedule.n_frames != tokens.n_frames() {
        return Err(Error::Shape(format!(
            "schedule built for {} frames, tensor has {}",
            schedule.n_frames,
            tokens.n_frames()
        )));
    }
    let mut current = tokens.clone();
    let frame_len = current.frame_len();
    for (_, segment) in schedule.segments() {
        let summary = summary_token(&current, &segment.sample_indices, grid)?;
        let at = segment.update_index;
        if at >= current.n_frames() {
            return Err(Error::IndexOutOfRange {
                index: at,
                len: current.n_frames(),
            });
        }
        let (n, h, w, c) = current.dims();
        let mut data = current.into_vec();
        data[at * frame_len..(at + 1) * frame_len].copy_from_slice(summary.as_slice());
        current = FrameTokens::from_parts(n, h, w, c, data);
    }
    Ok(current)
}
