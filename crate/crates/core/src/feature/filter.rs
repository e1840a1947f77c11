use serde::{Deserialize, Serialize};

use super::Spectrogram;
use crate::error::{Error, Result};

/// Default tolerance on the correlation drift.
pub const DEFAULT_THETA: f64 = 0.05;

/// Verdict of the distorted-preamble filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub accepted: bool,
    /// Peak-profile correlation of this pair.
    pub rho: f64,
    /// `|rho_ref - rho|`.
    pub rho_d: f64,
}

/// Per-frame peak magnitude `max_k |S[k, m]|`.
pub fn peak_profile(s: &Spectrogram) -> Vec<f64> {
    let (rows, cols) = s.bins.shape();
    let mut peaks = vec![0.0f64; cols];
    for r in 0..rows {
        for (p, z) in peaks.iter_mut().zip(s.bins.row(r)) {
            *p = p.max(z.norm());
        }
    }
    peaks
}

/// Sample Pearson correlation. Errors when either sequence is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Input(format!(
            "pearson needs equal-length sequences of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let scale = ma.abs().max(mb.abs()).max(f64::MIN_POSITIVE);
    let tiny = (1e-12 * scale).powi(2) * n;
    if saa <= tiny || sbb <= tiny {
        return Err(Error::UndefinedCorrelation(
            "peak sequence has zero variance".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of the per-frame peak profiles of a high/low pair.
pub fn pair_correlation(s_high: &Spectrogram, s_low: &Spectrogram) -> Result<f64> {
    if s_high.bins.shape() != s_low.bins.shape() {
        return Err(Error::Input("spectrogram shapes differ".into()));
    }
    pearson(&peak_profile(s_high), &peak_profile(s_low))
}

/// Accept the pair iff its peak-profile correlation stays within `theta` of
/// the reference correlation measured in a channel without variation.
pub fn correlation_filter(
    s_high: &Spectrogram,
    s_low: &Spectrogram,
    rho_ref: f64,
    theta: f64,
) -> Result<FilterOutcome> {
    if !(-1.0..=1.0).contains(&rho_ref) {
        return Err(Error::Input(format!("rho_ref {rho_ref} outside [-1, 1]")));
    }
    if theta < 0.0 {
        return Err(Error::Input("theta must be nonnegative".into()));
    }
    let rho = pair_correlation(s_high, s_low)?;
    let rho_d = (rho_ref - rho).abs();
    Ok(FilterOutcome {
        accepted: rho_d <= theta,
        rho,
        rho_d,
    })
}
