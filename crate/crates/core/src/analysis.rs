//! Token-norm saliency analysis: per-region norm distributions and
//! top-fraction norm masks.

use std::fmt;
#[cfg(feature = "io")]
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{token_norm_map, TokenGrid};

pub const DEFAULT_BINS: usize = 64;

/// Binary `height x width` map; 1 marks a salient position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaliencyMask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl SaliencyMask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != height * width || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::Shape(format!("mask values must be 0 or 1, got {v}")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// Read a mask from a single-channel grid holding exact 0.0 / 1.0 values.
    pub fn from_grid(grid: &TokenGrid) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::Shape(format!(
                "mask grid must have 1 channel, got {}",
                grid.channels()
            )));
        }
        let values = grid
            .as_slice()
            .iter()
            .map(|&v| match v {
                0.0 => Ok(0),
                1.0 => Ok(1),
                v => Err(Error::Shape(format!("mask values must be 0 or 1, got {v}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(grid.height(), grid.width(), values)
    }

    pub fn to_grid(&self) -> TokenGrid {
        let data = self.values.iter().map(|&v| v as f32).collect();
        TokenGrid::from_parts(self.height, self.width, 1, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn is_set(&self, h: usize, w: usize) -> bool {
        self.values[h * self.width + w] == 1
    }

    pub fn count_set(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Salient,
    Background,
    All,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Salient => "salient",
            Region::Background => "background",
            Region::All => "all",
        })
    }
}

/// Norm distribution of one region. Empty regions report zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub region: Region,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// `bins + 1` edges spanning `[0, max norm in the frame]`, shared by all regions.
    pub bin_edges: Vec<f64>,
    pub bin_counts: Vec<usize>,
}

impl NormStats {
    /// Standard error of the mean.
    pub fn mean_std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std / (self.count as f64).sqrt()
        }
    }
}

fn summarize(region: Region, norms: &[f64], edges: &[f64]) -> NormStats {
    let bins = edges.len() - 1;
    let top = edges[bins];
    let mut bin_counts = vec![0usize; bins];
    for &v in norms {
        let b = if top > 0.0 {
            ((v / top) * bins as f64) as usize
        } else {
            0
        };
        bin_counts[b.min(bins - 1)] += 1;
    }
    let count = norms.len();
    if count == 0 {
        return NormStats {
            region,
            count,
            mean: 0.0,
            std: 0.0,
            min: 0.0,
            max: 0.0,
            bin_edges: edges.to_vec(),
            bin_counts,
        };
    }
    let mean = norms.iter().sum::<f64>() / count as f64;
    let var = norms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    NormStats {
        region,
        count,
        mean,
        std: var.sqrt(),
        min: norms.iter().copied().fold(f64::INFINITY, f64::min),
        max: norms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        bin_edges: edges.to_vec(),
        bin_counts,
    }
}

pub fn norm_stats(
    frame: &TokenGrid,
    mask: Option<&SaliencyMask>,
    p: f64,
) -> Result<Vec<NormStats>> {
    norm_stats_with_bins(frame, mask, p, DEFAULT_BINS)
}

/// Per-region norm statistics: `[salient, background]` with a mask, `[all]` without.
pub fn norm_stats_with_bins(
    frame: &TokenGrid,
    mask: Option<&SaliencyMask>,
    p: f64,
    bins: usize,
) -> Result<Vec<NormStats>> {
    if bins == 0 {
        return Err(Error::Config("bin count must be >= 1".into()));
    }
    if let Some(m) = mask {
        if (m.height, m.width) != (frame.height(), frame.width()) {
            return Err(Error::Shape(format!(
                "mask is {}x{}, frame is {}x{}",
                m.height,
                m.width,
                frame.height(),
                frame.width()
            )));
        }
    }
    let norms = token_norm_map(frame, p)?;
    let top = norms.iter().copied().fold(0.0f64, f64::max);
    let edges: Vec<f64> = (0..=bins).map(|i| top * i as f64 / bins as f64).collect();
    Ok(match mask {
        None => vec![summarize(Region::All, &norms, &edges)],
        Some(m) => {
            let (mut salient, mut background) = (Vec::new(), Vec::new());
            for (&v, &bit) in norms.iter().zip(&m.values) {
                if bit == 1 {
                    salient.push(v)
                } else {
                    background.push(v)
                }
            }
            vec![
                summarize(Region::Salient, &salient, &edges),
                summarize(Region::Background, &background, &edges),
            ]
        }
    })
}

/// Mark the `ceil(fraction * H * W)` highest-norm positions. Ties go to the
/// earlier row-major position.
pub fn top_fraction_mask(frame: &TokenGrid, fraction: f64, p: f64) -> Result<SaliencyMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    let norms = token_norm_map(frame, p)?;
    let total = norms.len();
    let keep = selection_count(fraction, total);
    let mut order: Vec<usize> = (0..total).collect();
    // stable sort keeps row-major order among equal norms
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut values = vec![0u8; total];
    for &i in &order[..keep] {
        values[i] = 1;
    }
    SaliencyMask::new(frame.height(), frame.width(), values)
}

/// `ceil(fraction * total)`, ignoring float noise such as `0.7 * 10 = 7.000000000000001`.
fn selection_count(fraction: f64, total: usize) -> usize {
    let exact = fraction * total as f64;
    let nearest = exact.round();
    let k = if (exact - nearest).abs() <= 1e-9 * total as f64 {
        nearest
    } else {
        exact.ceil()
    };
    (k as usize).clamp(1, total)
}

#[cfg(feature = "io")]
#[derive(Serialize)]
struct CsvRow {
    frame: usize,
    region: Region,
    kind: &'static str,
    bin: Option<usize>,
    lo: Option<f64>,
    hi: Option<f64>,
    count: usize,
    mean: Option<f64>,
    std: Option<f64>,
    min: Option<f64>,
    max: Option<f64>,
}

/// One `summary` row per region followed by one `bin` row per histogram bin.
#[cfg(feature = "io")]
pub fn write_norm_stats_csv<W: Write>(out: W, frames: &[(usize, Vec<NormStats>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    for (frame, stats) in frames {
        for s in stats {
            w.serialize(CsvRow {
                frame: *frame,
                region: s.region,
                kind: "summary",
                bin: None,
                lo: None,
                hi: None,
                count: s.count,
                mean: Some(s.mean),
                std: Some(s.std),
                min: Some(s.min),
                max: Some(s.max),
            })
            .map_err(csv_err)?;
            for (b, &count) in s.bin_counts.iter().enumerate() {
                w.serialize(CsvRow {
                    frame: *frame,
                    region: s.region,
                    kind: "bin",
                    bin: Some(b),
                    lo: Some(s.bin_edges[b]),
                    hi: Some(s.bin_edges[b + 1]),
                    count,
                    mean: None,
                    std: None,
                    min: None,
                    max: None,
                })
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_frame_stats() {
        let g = TokenGrid::filled(3, 3, &[0.0, 0.0]).unwrap();
        let s = norm_stats(&g, None, 2.0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].region, Region::All);
        assert_eq!((s[0].count, s[0].mean, s[0].std), (9, 0.0, 0.0));
        assert_eq!(s[0].bin_counts[0], 9);
        assert_eq!(s[0].bin_counts.len(), DEFAULT_BINS);
    }

    #[test]
    fn separated_regions() {
        // salient tokens are unit vectors scaled by 2, background by 1
        let mask = SaliencyMask::new(2, 3, vec![1, 0, 1, 0, 0, 1]).unwrap();
        let g = TokenGrid::from_fn(2, 3, 2, |h, w, c| {
            let scale = if mask.is_set(h, w) { 2.0 } else { 1.0 };
            let unit = if (h + w) % 2 == 0 {
                [0.6, 0.8]
            } else {
                [1.0, 0.0]
            };
            scale * unit[c]
        })
        .unwrap();
        let s = norm_stats(&g, Some(&mask), 2.0).unwrap();
        let (sal, bg) = (&s[0], &s[1]);
        assert_eq!(sal.region, Region::Salient);
        assert_eq!(sal.count + bg.count, 6);
        assert!((sal.mean - 2.0).abs() < 1e-6 && (bg.mean - 1.0).abs() < 1e-6);
        for (a, b) in sal.bin_counts.iter().zip(&bg.bin_counts) {
            assert!(*a == 0 || *b == 0, "histograms overlap");
        }
        assert_eq!(sal.bin_counts.iter().sum::<usize>(), 3);
    }

    #[test]
    fn empty_region_reports_zero() {
        let mask = SaliencyMask::new(1, 2, vec![1, 1]).unwrap();
        let g = TokenGrid::filled(1, 2, &[1.0]).unwrap();
        let s = norm_stats(&g, Some(&mask), 2.0).unwrap();
        assert_eq!(s[1].count, 0);
        assert_eq!(s[1].mean, 0.0);
    }

    #[test]
    fn mask_shape_mismatch() {
        let mask = SaliencyMask::new(1, 2, vec![1, 0]).unwrap();
        let g = TokenGrid::filled(2, 2, &[1.0]).unwrap();
        assert!(norm_stats(&g, Some(&mask), 2.0).is_err());
        assert!(SaliencyMask::new(1, 2, vec![1, 2]).is_err());
        assert!(SaliencyMask::new(1, 2, vec![1]).is_err());
    }

    #[test]
    fn top_fraction_examples() {
        let g = TokenGrid::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            top_fraction_mask(&g, 1.0, 2.0).unwrap().values(),
            &[1, 1, 1, 1]
        );

        let g = TokenGrid::new(2, 1, 1, vec![5.0, 1.0]).unwrap();
        assert_eq!(top_fraction_mask(&g, 0.5, 2.0).unwrap().values(), &[1, 0]);

        let g = TokenGrid::filled(2, 2, &[1.0]).unwrap();
        assert_eq!(
            top_fraction_mask(&g, 0.5, 2.0).unwrap().values(),
            &[1, 1, 0, 0]
        );
    }

    #[test]
    fn top_fraction_rejects_bad_fraction() {
        let g = TokenGrid::filled(2, 2, &[1.0]).unwrap();
        assert!(top_fraction_mask(&g, 0.0, 2.0).is_err());
        assert!(top_fraction_mask(&g, 1.5, 2.0).is_err());
        assert!(top_fraction_mask(&g, f64::NAN, 2.0).is_err());
    }

    #[test]
    fn selection_count_ignores_float_noise() {
        assert_eq!(selection_count(0.7, 10), 7);
        assert_eq!(selection_count(0.71, 10), 8);
        assert_eq!(selection_count(0.001, 10), 1);
        assert_eq!(selection_count(0.5, 2), 1);
    }

    #[test]
    fn mask_grid_round_trip() {
        let m = SaliencyMask::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(SaliencyMask::from_grid(&m.to_grid()).unwrap(), m);
        let bad = TokenGrid::filled(1, 1, &[0.5]).unwrap();
        assert!(SaliencyMask::from_grid(&bad).is_err());
    }

    #[cfg(feature = "io")]
    #[test]
    fn csv_layout() {
        let g = TokenGrid::new(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let s = norm_stats_with_bins(&g, None, 2.0, 2).unwrap();
        let mut buf = Vec::new();
        write_norm_stats_csv(&mut buf, &[(0, s)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "frame,region,kind,bin,lo,hi,count,mean,std,min,max"
        );
        assert_eq!(lines[1], "0,all,summary,,,,2,1.5,0.5,1.0,2.0");
        assert_eq!(lines[2], "0,all,bin,0,0.0,1.0,0,,,,");
        assert_eq!(lines[3], "0,all,bin,1,1.0,2.0,2,,,,");
    }

    proptest! {
        #[test]
        fn top_fraction_selects_highest(
            h in 1usize..6, w in 1usize..6, fraction in 0.01f64..1.0,
            vals in proptest::collection::vec(0u8..5, 36),
        ) {
            let g = TokenGrid::from_fn(h, w, 1, |y, x, _| vals[y * 6 + x] as f32).unwrap();
            let mask = top_fraction_mask(&g, fraction, 2.0).unwrap();
            prop_assert_eq!(mask.count_set(), selection_count(fraction, h * w));
            let norms = token_norm_map(&g, 2.0).unwrap();
            let min_sel = norms.iter().zip(mask.values()).filter(|(_, &m)| m == 1).map(|(n, _)| *n).fold(f64::INFINITY, f64::min);
            let max_unsel = norms.iter().zip(mask.values()).filter(|(_, &m)| m == 0).map(|(n, _)| *n).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_sel >= max_unsel);
        }

        #[test]
        fn regions_partition_and_bins_sum(
            h in 1usize..6, w in 1usize..6, bins in 1usize..10,
            vals in proptest::collection::vec(-3.0f32..3.0, 36), bits in proptest::collection::vec(0u8..2, 36),
        ) {
            let g = TokenGrid::from_fn(h, w, 1, |y, x, _| vals[y * 6 + x]).unwrap();
            let mask = SaliencyMask::new(h, w, bits[..h * w].to_vec()).unwrap();
            let s = norm_stats_with_bins(&g, Some(&mask), 2.0, bins).unwrap();
            prop_assert_eq!(s[0].count + s[1].count, h * w);
            for r in &s {
                prop_assert_eq!(r.bin_counts.iter().sum::<usize>(), r.count);
                if r.count > 0 {
                    prop_assert!(r.mean >= r.min - 1e-12 && r.mean <= r.max + 1e-12);
                }
            }
        }
    }
}
