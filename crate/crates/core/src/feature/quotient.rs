use serde::{Deserialize, Serialize};

use super::Spectrogram;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Relative magnitude below which a low-power bin is treated as empty.
pub const DEFAULT_GUARD: f64 = 1e-6;

/// Element-wise high/low spectrogram ratio in dB: `10 log10(|S_h / S_l|^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientFingerprint {
    pub q_db: Grid<f64>,
    /// True where the denominator was below the guard and the bin was set
    /// to 0 dB.
    pub guarded: Grid<bool>,
    pub device_id: String,
    pub claimed_id: String,
}

impl QuotientFingerprint {
    pub fn unguarded_count(&self) -> usize {
        self.guarded.as_slice().iter().filter(|g| !**g).count()
    }
}

/// Divide `s_high` by `s_low` bin by bin. Bins with
/// `|S_l| < guard * max |S_l|` are masked to 0 dB.
pub fn quotient(s_high: &Spectrogram, s_low: &Spectrogram, guard: f64) -> Result<QuotientFingerprint> {
    if s_high.bins.shape() != s_low.bins.shape() {
        return Err(Error::Input(format!(
            "spectrogram shapes differ: {:?} vs {:?}",
            s_high.bins.shape(),
            s_low.bins.shape()
        )));
    }
    if !(0.0..1.0).contains(&guard) {
        return Err(Error::Input(format!("guard {guard} outside [0, 1)")));
    }
    let peak = s_low
        .bins
        .as_slice()
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    let floor = guard * peak;
    let guarded = s_low.bins.map(|z| {
        let mag = z.norm();
        mag == 0.0 || mag < floor
    });
    let mut q_db = Grid::filled(s_high.bins.rows(), s_high.bins.cols(), 0.0);
    for (i, ((out, h), (l, g))) in q_db
        .as_mut_slice()
        .iter_mut()
        .zip(s_high.bins.as_slice())
        .zip(s_low.bins.as_slice().iter().zip(guarded.as_slice()))
        .enumerate()
    {
        if *g {
            continue;
        }
        let ratio = h.norm_sqr() / l.norm_sqr();
        *out = if ratio > 0.0 {
            10.0 * ratio.log10()
        } else {
            // Numerator exactly zero: pin to the floor used for spectrograms.
            10.0 * super::POWER_FLOOR.log10()
        };
        debug_assert!(out.is_finite(), "bin {i}");
    }
    Ok(QuotientFingerprint {
        q_db,
        guarded,
        device_id: String::new(),
        claimed_id: String::new(),
    })
}
