//! Binary tensor files and run configuration files.
//!
//! Tensor file layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes  "STGP"
//! version  u16      1
//! rank     u16      3 (H, W, d) or 4 (N, H, W, d)
//! dims     u32 x rank
//! dtype    u16      0 = f32
//! payload  product(dims) x 4 bytes, row-major f32
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nsp::PoolConfig;
use crate::pipeline::StGridPoolConfig;
use crate::ptg::{GridSpec, PtgConfig};
use crate::tensor::{FrameTokens, TokenGrid};

pub const MAGIC: &[u8; 4] = b"STGP";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u16 = 0;

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Frames(FrameTokens),
    Grid(TokenGrid),
}

impl Tensor {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Tensor::Frames(t) => {
                let (n, h, w, d) = t.dims();
                vec![n, h, w, d]
            }
            Tensor::Grid(g) => {
                let (h, w, d) = g.dims();
                vec![h, w, d]
            }
        }
    }

    fn values(&self) -> &[f32] {
        match self {
            Tensor::Frames(t) => t.as_slice(),
            Tensor::Grid(g) => g.as_slice(),
        }
    }

    /// View as a frame sequence; a rank-3 grid becomes one frame.
    pub fn into_frames(self) -> FrameTokens {
        match self {
            Tensor::Frames(t) => t,
            Tensor::Grid(g) => {
                let (h, w, d) = g.dims();
                FrameTokens::from_parts(1, h, w, d, g.into_vec())
            }
        }
    }
}

impl From<FrameTokens> for Tensor {
    fn from(t: FrameTokens) -> Self {
        Tensor::Frames(t)
    }
}

impl From<TokenGrid> for Tensor {
    fn from(g: TokenGrid) -> Self {
        Tensor::Grid(g)
    }
}

pub fn encode_tensor(tensor: &Tensor) -> Vec<u8> {
    let dims = tensor.dims();
    let values = tensor.values();
    let mut out = Vec::with_capacity(10 + 4 * dims.len() + 4 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u16).to_le_bytes());
    for &d in &dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format(format!("truncated header: missing {field}")));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rank = cur.u16("rank")?;
    if rank != 3 && rank != 4 {
        return Err(Error::Format(format!("unsupported rank {rank}")));
    }
    let dims = (0..rank)
        .map(|i| cur.u32(&format!("dim {i}")).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let dtype = cur.u16("dtype")?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unknown dtype {dtype}")));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(Error::Format(format!("bad dims: dim {i} is zero")));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Format("bad dims: element count overflows".into()))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < count {
        return Err(Error::Format(format!(
            "truncated payload: expected {count} bytes, got {}",
            payload.len()
        )));
    }
    if payload.len() > count {
        return Err(Error::Format(format!(
            "trailing bytes: expected {count} payload bytes, got {}",
            payload.len()
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(match dims[..] {
        [n, h, w, d] => Tensor::Frames(FrameTokens::new(n, h, w, d, values)?),
        [h, w, d] => Tensor::Grid(TokenGrid::new(h, w, d, values)?),
        _ => unreachable!(),
    })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    write_atomic(path, &encode_tensor(tensor))
}

/// Write through a temp file in the destination directory and rename on
/// success, so a failed write never leaves a partial file behind.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Key-value run configuration. Absent keys fall back to the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub base_length: Option<usize>,
    pub levels: Option<usize>,
    pub grid_m: Option<usize>,
    pub grid_n: Option<usize>,
    pub kernel_h: Option<usize>,
    pub kernel_w: Option<usize>,
    pub stride_h: Option<usize>,
    pub stride_w: Option<usize>,
    pub beta: Option<f64>,
    pub norm_order: Option<f64>,
    pub ptg_enabled: Option<bool>,
    pub nsp_enabled: Option<bool>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Keys set in `overrides` win.
    pub fn merge(self, overrides: RunConfig) -> RunConfig {
        RunConfig {
            base_length: overrides.base_length.or(self.base_length),
            levels: overrides.levels.or(self.levels),
            grid_m: overrides.grid_m.or(self.grid_m),
            grid_n: overrides.grid_n.or(self.grid_n),
            kernel_h: overrides.kernel_h.or(self.kernel_h),
            kernel_w: overrides.kernel_w.or(self.kernel_w),
            stride_h: overrides.stride_h.or(self.stride_h),
            stride_w: overrides.stride_w.or(self.stride_w),
            beta: overrides.beta.or(self.beta),
            norm_order: overrides.norm_order.or(self.norm_order),
            ptg_enabled: overrides.ptg_enabled.or(self.ptg_enabled),
            nsp_enabled: overrides.nsp_enabled.or(self.nsp_enabled),
        }
    }

    pub fn resolve(&self) -> Result<StGridPoolConfig> {
        let d = StGridPoolConfig::default();
        let cfg = StGridPoolConfig {
            ptg: PtgConfig {
                base_length: self.base_length.unwrap_or(d.ptg.base_length),
                levels: self.levels.unwrap_or(d.ptg.levels),
                grid: GridSpec {
                    m: self.grid_m.unwrap_or(d.ptg.grid.m),
                    n: self.grid_n.unwrap_or(d.ptg.grid.n),
                },
            },
            pool: PoolConfig {
                kernel_h: self.kernel_h.unwrap_or(d.pool.kernel_h),
                kernel_w: self.kernel_w.unwrap_or(d.pool.kernel_w),
                stride_h: self.stride_h.unwrap_or(d.pool.stride_h),
                stride_w: self.stride_w.unwrap_or(d.pool.stride_w),
                beta: self.beta.unwrap_or(d.pool.beta),
                norm_order: self.norm_order.unwrap_or(d.pool.norm_order),
            },
            ptg_enabled: self.ptg_enabled.unwrap_or(d.ptg_enabled),
            nsp_enabled: self.nsp_enabled.unwrap_or(d.nsp_enabled),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FrameTokens {
        let data = (0..2 * 3 * 3 * 4).map(|i| i as f32 * 0.5 - 7.0).collect();
        FrameTokens::new(2, 3, 3, 4, data).unwrap()
    }

    #[test]
    fn header_layout() {
        let g = TokenGrid::new(1, 2, 1, vec![1.0, -2.0]).unwrap();
        let bytes = encode_tensor(&g.into());
        assert_eq!(&bytes[..4], b"STGP");
        assert_eq!(&bytes[4..8], &[1, 0, 3, 0]);
        assert_eq!(&bytes[8..20], &[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[20..22], &[0, 0]);
        assert_eq!(&bytes[22..26], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 30);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.stgp");
        let t: Tensor = sample().into();
        write_tensor(&path, &t).unwrap();
        assert_eq!(read_tensor(&path).unwrap(), t);
    }

    #[test]
    fn decode_errors_name_the_field() {
        let good = encode_tensor(&sample().into());
        let err = |b: &[u8]| decode_tensor(b).unwrap_err().to_string();

        let mut b = good.clone();
        b[..4].copy_from_slice(b"XXXX");
        assert_eq!(err(&b), "bad magic");

        let mut b = good.clone();
        b[4] = 2;
        assert_eq!(err(&b), "unsupported version 2");

        let mut b = good.clone();
        b[6] = 5;
        assert_eq!(err(&b), "unsupported rank 5");

        let mut b = good.clone();
        b[24] = 1;
        assert_eq!(err(&b), "unknown dtype 1");

        assert_eq!(
            err(&good[..good.len() - 10]),
            "truncated payload: expected 288 bytes, got 278"
        );
        assert_eq!(err(&good[..9]), "truncated header: missing dim 0");

        let mut b = good.clone();
        b.push(0);
        assert!(err(&b).starts_with("trailing bytes"));

        let mut b = good.clone();
        b[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert_eq!(err(&b), "bad dims: dim 0 is zero");

        let mut b = good;
        b[26..30].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(err(&b), "non-finite input");
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("out.stgp");
        assert!(write_tensor(&path, &sample().into()).is_err());
        assert!(!path.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn run_config_defaults_and_overrides() {
        let cfg = RunConfig::default().resolve().unwrap();
        assert_eq!(cfg, StGridPoolConfig::default());

        let file =
            RunConfig::parse("beta = 0.5\nlevels = 2\n# note\nptg_enabled = false\n").unwrap();
        let flags = RunConfig {
            beta: Some(2.0),
            ..Default::default()
        };
        let cfg = file.merge(flags).resolve().unwrap();
        assert_eq!(cfg.pool.beta, 2.0);
        assert_eq!(cfg.ptg.levels, 2);
        assert!(!cfg.ptg_enabled);
        assert_eq!(cfg.pool.kernel_h, 2);
    }

    #[test]
    fn run_config_rejects_unknown_and_invalid() {
        let err = RunConfig::parse("temperature = 1").unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        let cfg = RunConfig {
            ptg_enabled: Some(false),
            nsp_enabled: Some(false),
            ..Default::default()
        };
        assert!(cfg.resolve().is_err());
        assert!(RunConfig {
            beta: Some(-1.0),
            ..Default::default()
        }
        .resolve()
        .is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_is_lossless(
            dims in (1usize..4, 1usize..4, 1usize..4, 1usize..4),
            raw in proptest::collection::vec(any::<u32>(), 81),
        ) {
            let (n, h, w, d) = dims;
            let vals: Vec<f32> = raw[..n * h * w * d].iter()
                .map(|&b| f32::from_bits(b))
                .map(|v| if v.is_finite() { v } else { 0.0 })
                .collect();
            let t: Tensor = FrameTokens::new(n, h, w, d, vals).unwrap().into();
            let back = decode_tensor(&encode_tensor(&t)).unwrap();
            let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&t));
            prop_assert_eq!(back.dims(), t.dims());
        }
    }
}
