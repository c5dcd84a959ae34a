//! Training-free spatiotemporal compression of visual-token tensors.
//!
//! A `(frames, height, width, channels)` token tensor passes through two stages:
//!
//! * [`ptg`]: pyramid temporal gridding rewrites each temporal segment's last
//!   frame with a summary tiled from frames sampled across the segment, at
//!   several segment lengths.
//! * [`nsp`]: norm-based spatial pooling reduces each frame with sliding
//!   windows whose members are weighted by a softmax over their token norms.
//!
//! [`st_gridpool`] runs both; [`token_budget`] reports the resulting token counts.

pub mod analysis;
pub mod error;
#[cfg(feature = "io")]
pub mod io;
pub mod nsp;
pub mod pipeline;
pub mod ptg;
#[cfg(feature = "io")]
pub mod sweep;
pub mod tensor;

pub use analysis::{norm_stats, top_fraction_mask, NormStats, Region, SaliencyMask};
pub use error::{Error, Result};
pub use nsp::{apply_nsp, average_pool_reference, pool_frame, window_weights, PoolConfig};
pub use pipeline::{st_gridpool, token_budget, BudgetReport, StGridPoolConfig};
pub use ptg::{apply_ptg, build_schedule, summary_token, GridSpec, PtgConfig, PyramidSchedule};
pub use tensor::{
    bilinear_resize, lp_norm, spatial_concat, token_norm_map, FrameTokens, TokenGrid,
};
