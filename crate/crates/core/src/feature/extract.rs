use serde::{Deserialize, Serialize};

use super::{
    pair_correlation, quotient, rasterize, stft, ClipRange, FeatureImage, FeatureKind, StftConfig,
    DEFAULT_GUARD, DEFAULT_THETA,
};
use crate::error::Result;
use crate::grid::Grid;
use crate::signal::{CapturePair, LoRaConfig, PowerTag};

/// Everything needed to turn a capture pair into classifier inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    /// Relative denominator guard of the quotient.
    pub guard: f64,
    /// Keep only the DFT bins inside the LoRa bandwidth before rasterizing.
    pub band_crop: bool,
    pub image_size: usize,
    pub depth: u32,
    /// Correlation-drift tolerance of the distorted-preamble filter.
    pub theta: f64,
    pub clip_percentiles: [f64; 2],
    /// Training captures used to estimate the clip range.
    pub clip_calibration: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            stft: StftConfig::default(),
            guard: DEFAULT_GUARD,
            band_crop: true,
            image_size: 64,
            depth: 8,
            theta: DEFAULT_THETA,
            clip_percentiles: [1.0, 99.0],
            clip_calibration: 100,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        let bad = |m: String| Err(crate::Error::Config(m));
        if !(0.0..1.0).contains(&self.guard) {
            return bad(format!("guard {} outside [0, 1)", self.guard));
        }
        if self.image_size == 0 || !(1..=8).contains(&self.depth) {
            return bad("image size must be positive and depth in 1..=8".into());
        }
        if self.theta < 0.0 {
            return bad("theta must be nonnegative".into());
        }
        let [lo, hi] = self.clip_percentiles;
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return bad(format!("clip percentiles {lo}..{hi} invalid"));
        }
        if self.clip_calibration == 0 {
            return bad("clip calibration needs at least one capture".into());
        }
        Ok(())
    }

    /// Rows kept from the `W x M` matrices; all of them when cropping is off.
    pub fn rows_for(&self, lora: &LoRaConfig) -> Vec<usize> {
        if self.band_crop {
            self.stft.band_bins(lora.bandwidth_hz, lora.sample_rate_hz)
        } else {
            (0..self.stft.window_len).collect()
        }
    }
}

/// Pre-quantization matrices and filter statistic of one capture.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureAnalysis {
    /// Peak-profile correlation; `None` when undefined (flat profile).
    pub rho: Option<f64>,
    pub quotient_db: Grid<f64>,
    pub spectrogram_db: Grid<f64>,
    /// Unguarded bin count of the full quotient.
    pub unguarded: usize,
}

impl CaptureAnalysis {
    pub fn matrix(&self, kind: FeatureKind) -> &Grid<f64> {
        match kind {
            FeatureKind::Spectrogram => &self.spectrogram_db,
            _ => &self.quotient_db,
        }
    }
}

/// STFT both halves, measure the filter correlation, form the quotient and
/// the high-power log spectrogram, and keep `rows`.
pub fn analyze_capture(
    pair: &CapturePair,
    cfg: &FeatureConfig,
    rows: &[usize],
) -> Result<CaptureAnalysis> {
    let mut s_high = stft(&pair.high, &cfg.stft)?;
    s_high.power_tag = Some(PowerTag::High);
    let mut s_low = stft(&pair.low, &cfg.stft)?;
    s_low.power_tag = Some(PowerTag::Low);
    let rho = pair_correlation(&s_high, &s_low).ok();
    let q = quotient(&s_high, &s_low, cfg.guard)?;
    Ok(CaptureAnalysis {
        rho,
        unguarded: q.unguarded_count(),
        quotient_db: q.q_db.select_rows(rows),
        spectrogram_db: s_high.power_db().select_rows(rows),
    })
}

/// Rasterize one analysis for `kind` with the experiment's frozen clip.
pub fn to_image(
    analysis: &CaptureAnalysis,
    kind: FeatureKind,
    clip: ClipRange,
    cfg: &FeatureConfig,
) -> Result<FeatureImage> {
    rasterize(analysis.matrix(kind), clip, cfg.image_size, cfg.depth, kind)
}
