use serde::{Deserialize, Serialize};

use super::Spectrogram;
use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Quotient,
    Spectrogram,
    Diff,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Quotient => "quotient",
            FeatureKind::Spectrogram => "spectrogram",
            FeatureKind::Diff => "diff",
        }
    }
}

/// Square quantized image fed to the classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImage {
    pub size: usize,
    pub depth: u32,
    /// Row-major, `size * size` levels in `[0, 2^depth - 1]`.
    pub pixels: Vec<u8>,
    pub source: FeatureKind,
}

impl FeatureImage {
    pub fn max_level(&self) -> u8 {
        ((1u32 << self.depth) - 1) as u8
    }

    /// Pixels scaled to `[0, 1]`.
    pub fn normalized(&self) -> impl Iterator<Item = f32> + '_ {
        let scale = 1.0 / self.max_level() as f32;
        self.pixels.iter().map(move |&p| p as f32 * scale)
    }
}

/// Value range mapped onto the quantizer, fixed per experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRange {
    pub lo: f64,
    pub hi: f64,
}

/// Upper bound on values sampled when estimating corpus percentiles.
const PERCENTILE_SAMPLE: usize = 1 << 21;

impl ClipRange {
    /// `[p_lo, p_hi]` percentiles (linear interpolation between order
    /// statistics) over every entry of the corpus. Large corpora are
    /// subsampled with a fixed stride.
    pub fn from_corpus<'a>(
        matrices: impl IntoIterator<Item = &'a Grid<f64>>,
        p_lo: f64,
        p_hi: f64,
    ) -> Result<Self> {
        let matrices: Vec<&Grid<f64>> = matrices.into_iter().collect();
        let total: usize = matrices.iter().map(|m| m.as_slice().len()).sum();
        if total == 0 {
            return Err(Error::Input("empty corpus".into()));
        }
        let stride = total.div_ceil(PERCENTILE_SAMPLE).max(1);
        let values: Vec<f64> = matrices
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .step_by(stride)
            .collect();
        Self::from_values(values, p_lo, p_hi)
    }

    /// Percentile range of an explicit value sample.
    pub fn from_values(mut values: Vec<f64>, p_lo: f64, p_hi: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("empty corpus".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("corpus has non-finite values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(ClipRange {
            lo: percentile_sorted(&values, p_lo),
            hi: percentile_sorted(&values, p_hi),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo >= self.hi {
            return Err(Error::Input(format!(
                "degenerate clip range [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

pub(crate) fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Clip to `clip`, bilinearly resample to `size x size` (corner-aligned),
/// then quantize linearly to `2^depth` levels.
pub fn rasterize(
    matrix: &Grid<f64>,
    clip: ClipRange,
    size: usize,
    depth: u32,
    source: FeatureKind,
) -> Result<FeatureImage> {
    clip.validate()?;
    if size == 0 || !(1..=8).contains(&depth) {
        return Err(Error::Input(format!(
            "image size must be positive and depth in 1..=8, got {size} and {depth}"
        )));
    }
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Input("cannot rasterize an empty matrix".into()));
    }
    if matrix.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    let clipped = matrix.map(|v| v.clamp(clip.lo, clip.hi));
    let axis = |n_src: usize| -> Vec<(usize, usize, f64)> {
        (0..size)
            .map(|i| {
                if n_src == 1 || size == 1 {
                    return (0, 0, 0.0);
                }
                let pos = i as f64 * (n_src - 1) as f64 / (size - 1) as f64;
                let i0 = (pos.floor() as usize).min(n_src - 1);
                let i1 = (i0 + 1).min(n_src - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let ys = axis(rows);
    let xs = axis(cols);
    let levels = ((1u32 << depth) - 1) as f64;
    let span = clip.hi - clip.lo;
    let mut pixels = Vec::with_capacity(size * size);
    for &(r0, r1, fy) in &ys {
        for &(c0, c1, fx) in &xs {
            let top = clipped[(r0, c0)] * (1.0 - fx) + clipped[(r0, c1)] * fx;
            let bottom = clipped[(r1, c0)] * (1.0 - fx) + clipped[(r1, c1)] * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            let q = ((v - clip.lo) / span * levels).round().clamp(0.0, levels);
            pixels.push(q as u8);
        }
    }
    Ok(FeatureImage {
        size,
        depth,
        pixels,
        source,
    })
}

/// Conventional benchmark feature: the log-power spectrogram rasterized
/// the same way as the quotient.
pub fn spectrogram_feature(
    s: &Spectrogram,
    clip: ClipRange,
    size: usize,
    depth: u32,
) -> Result<FeatureImage> {
    rasterize(&s.power_db(), clip, size, depth, FeatureKind::Spectrogram)
}
