//! Cartesian configuration sweeps over temperature, norm order, pyramid
//! depth, base segment length and pooling kernel.

use std::io::Write;
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{st_gridpool, token_budget, StGridPoolConfig};
use crate::tensor::{norm_map_slice, FrameTokens};

/// Parse `"HxW"` (or a bare `"K"` for `KxK`).
pub fn parse_pair(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("expected HxW, got {text:?}"));
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    match text.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => parse(text).map(|k| (k, k)),
    }
}

/// Axis values to sweep. Empty axes keep the base configuration's value.
/// Kernel entries also set the stride, e.g. `"3x3"` means kernel 3x3, stride 3x3.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub beta: Vec<f64>,
    pub norm_order: Vec<f64>,
    pub levels: Vec<usize>,
    pub base_length: Vec<usize>,
    pub kernel: Vec<String>,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// All configurations, `beta` varying slowest and `kernel` fastest.
    pub fn expand(&self, base: &StGridPoolConfig) -> Result<Vec<StGridPoolConfig>> {
        fn axis<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
            if values.is_empty() {
                vec![fallback]
            } else {
                values.to_vec()
            }
        }
        let betas = axis(&self.beta, base.pool.beta);
        let orders = axis(&self.norm_order, base.pool.norm_order);
        let levels = axis(&self.levels, base.ptg.levels);
        let lengths = axis(&self.base_length, base.ptg.base_length);
        let kernels = if self.kernel.is_empty() {
            vec![(
                base.pool.kernel_h,
                base.pool.kernel_w,
                base.pool.stride_h,
                base.pool.stride_w,
            )]
        } else {
            self.kernel
                .iter()
                .map(|k| parse_pair(k).map(|(h, w)| (h, w, h, w)))
                .collect::<Result<_>>()?
        };
        let mut out = Vec::new();
        for &beta in &betas {
            for &norm_order in &orders {
                for &lv in &levels {
                    for &len in &lengths {
                        for &(kh, kw, sh, sw) in &kernels {
                            let mut c = *base;
                            c.pool.beta = beta;
                            c.pool.norm_order = norm_order;
                            c.ptg.levels = lv;
                            c.ptg.base_length = len;
                            c.pool.kernel_h = kh;
                            c.pool.kernel_w = kw;
                            c.pool.stride_h = sh;
                            c.pool.stride_w = sw;
                            c.validate()?;
                            out.push(c);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub norm_order: f64,
    pub levels: usize,
    pub base_length: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub output_tokens: usize,
    pub ratio: f64,
    /// Mean L2 norm of the output tokens.
    pub mean_norm: f64,
    pub std_norm: f64,
}

fn run_one(tokens: &FrameTokens, cfg: &StGridPoolConfig) -> Result<SweepRow> {
    let budget = token_budget(tokens.n_frames(), tokens.height(), tokens.width(), cfg)?;
    let out = st_gridpool(tokens, cfg)?;
    let norms = norm_map_slice(out.as_slice(), out.channels(), 2.0);
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let var = norms.iter().map(|n| (n - mean) * (n - mean)).sum::<f64>() / norms.len() as f64;
    Ok(SweepRow {
        beta: cfg.pool.beta,
        norm_order: cfg.pool.norm_order,
        levels: cfg.ptg.levels,
        base_length: cfg.ptg.base_length,
        kernel_h: cfg.pool.kernel_h,
        kernel_w: cfg.pool.kernel_w,
        stride_h: cfg.pool.stride_h,
        stride_w: cfg.pool.stride_w,
        output_tokens: budget.output_tokens,
        ratio: budget.ratio,
        mean_norm: mean,
        std_norm: var.sqrt(),
    })
}

/// Evaluate every configuration; rows come back in configuration order.
pub fn run_sweep(tokens: &FrameTokens, configs: &[StGridPoolConfig]) -> Result<Vec<SweepRow>> {
    #[cfg(feature = "parallel")]
    let rows = configs.par_iter().map(|c| run_one(tokens, c)).collect();
    #[cfg(not(feature = "parallel"))]
    let rows = configs.iter().map(|c| run_one(tokens, c)).collect();
    rows
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Format(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs() {
        assert_eq!(parse_pair("2x3").unwrap(), (2, 3));
        assert_eq!(parse_pair("4").unwrap(), (4, 4));
        assert_eq!(parse_pair(" 1 X 1 ").unwrap(), (1, 1));
        assert!(parse_pair("2x").is_err());
        assert!(parse_pair("axb").is_err());
    }

    #[test]
    fn expansion_order_and_size() {
        let spec =
            SweepSpec::parse("beta = [0.0, 1.0]\nkernel = [\"1x1\", \"2x2\", \"3x3\"]\n").unwrap();
        let configs = spec.expand(&StGridPoolConfig::default()).unwrap();
        assert_eq!(configs.len(), 6);
        assert_eq!(configs[0].pool.beta, 0.0);
        assert_eq!(configs[2].pool.kernel_h, 3);
        assert_eq!(configs[2].pool.stride_w, 3);
        assert_eq!(configs[3].pool.beta, 1.0);
        assert!(configs
            .iter()
            .all(|c| c.ptg.levels == 3 && c.pool.norm_order == 2.0));
    }

    #[test]
    fn spec_rejects_unknown_and_invalid() {
        assert!(SweepSpec::parse("temperature = [1.0]").is_err());
        let spec = SweepSpec {
            levels: vec![0],
            ..Default::default()
        };
        assert!(spec.expand(&StGridPoolConfig::default()).is_err());
    }

    #[test]
    fn rows_follow_config_order() {
        let data = (0..8 * 4 * 4 * 3)
            .map(|i| ((i * 37) % 11) as f32 - 5.0)
            .collect();
        let t = FrameTokens::new(8, 4, 4, 3, data).unwrap();
        let spec = SweepSpec::parse("beta = [0.0, 1.0, 4.0]\nkernel = [\"1x1\", \"2x2\"]").unwrap();
        let configs = spec.expand(&StGridPoolConfig::default()).unwrap();
        let rows = run_sweep(&t, &configs).unwrap();
        assert_eq!(rows.len(), 6);
        for (row, cfg) in rows.iter().zip(&configs) {
            assert_eq!(row.beta, cfg.pool.beta);
            assert_eq!(row.kernel_h, cfg.pool.kernel_h);
        }
        assert_eq!(rows[0].ratio, 1.0);
        assert_eq!(rows[1].ratio, 0.25);
        // the weighted pool leans toward high-norm tokens as beta grows
        assert!(rows[5].mean_norm > rows[1].mean_norm);

        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("beta,norm_order,levels,base_length,kernel_h,kernel_w,stride_h,stride_w,output_tokens,ratio,mean_norm,std_norm\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
