//! Temporal gridding followed by spatial pooling, with token-budget accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nsp::{apply_nsp, PoolConfig};
use crate::ptg::{apply_ptg, build_schedule, PtgConfig};
use crate::tensor::FrameTokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StGridPoolConfig {
    pub ptg: PtgConfig,
    pub pool: PoolConfig,
    pub ptg_enabled: bool,
    pub nsp_enabled: bool,
}

impl Default for StGridPoolConfig {
    fn default() -> Self {
        Self {
            ptg: PtgConfig::default(),
            pool: PoolConfig::default(),
            ptg_enabled: true,
            nsp_enabled: true,
        }
    }
}

impl StGridPoolConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.ptg_enabled && !self.nsp_enabled {
            return Err(Error::Config(
                "at least one of ptg and nsp must be enabled".into(),
            ));
        }
        if self.ptg_enabled {
            self.ptg.validate()?;
        }
        if self.nsp_enabled {
            self.pool.validate()?;
        }
        Ok(())
    }

    /// Config checks plus every geometric check against an `h x w` frame.
    pub fn validate_for(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        if self.nsp_enabled {
            self.pool.output_dims(height, width)?;
        }
        Ok(())
    }

    /// Output frame size for an `h x w` input.
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        self.validate_for(height, width)?;
        if self.nsp_enabled {
            self.pool.output_dims(height, width)
        } else {
            Ok((height, width))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetReport {
    pub input_tokens: usize,
    pub output_tokens: usize,
    pub ratio: f64,
}

pub fn st_gridpool(tokens: &FrameTokens, config: &StGridPoolConfig) -> Result<FrameTokens> {
    config.validate_for(tokens.height(), tokens.width())?;
    let gridded = if config.ptg_enabled {
        let schedule = build_schedule(tokens.n_frames(), &config.ptg)?;
        Some(apply_ptg(tokens, &schedule, config.ptg.grid)?)
    } else {
        None
    };
    let stage_input = gridded.as_ref().unwrap_or(tokens);
    if config.nsp_enabled {
        apply_nsp(stage_input, &config.pool)
    } else {
        Ok(gridded.unwrap_or_else(|| tokens.clone()))
    }
}

/// Token counts before and after compression. Temporal gridding rewrites
/// frames in place, so only the pooling geometry changes the count.
pub fn token_budget(
    n: usize,
    h: usize,
    w: usize,
    config: &StGridPoolConfig,
) -> Result<BudgetReport> {
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "token tensor dims must be >= 1, got {n}x{h}x{w}"
        )));
    }
    let (out_h, out_w) = config.output_dims(h, w)?;
    let input_tokens = n * h * w;
    let output_tokens = n * out_h * out_w;
    Ok(BudgetReport {
        input_tokens,
        output_tokens,
        ratio: output_tokens as f64 / input_tokens as f64,
    })
}
