use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::{BasebandSignal, LoRaConfig, PowerTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Symmetric Hamming, `0.54 - 0.46 cos(2 pi n / (W - 1))`.
    Hamming,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_len: 1024,
            hop: 512,
            window: WindowKind::Hamming,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Config(format!(
                "stft requires 1 <= hop <= window, got hop {} window {}",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }

    /// FFT length; equal to the window length.
    pub fn fft_size(&self) -> usize {
        self.window_len
    }

    pub fn coefficients(&self) -> Vec<f64> {
        let w = self.window_len;
        match self.window {
            WindowKind::Rectangular => vec![1.0; w],
            WindowKind::Hamming if w == 1 => vec![1.0],
            WindowKind::Hamming => (0..w)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (w - 1) as f64).cos())
                .collect(),
        }
    }

    pub fn frames_for(&self, len: usize) -> Result<usize> {
        if len < self.window_len {
            return Err(Error::Input(format!(
                "signal of {len} samples is shorter than the {}-sample window",
                self.window_len
            )));
        }
        Ok((len - self.window_len) / self.hop + 1)
    }

    /// DFT bins covering `[-bandwidth/2, bandwidth/2)`, in ascending
    /// frequency order (negative frequencies first).
    pub fn band_bins(&self, bandwidth_hz: f64, sample_rate_hz: f64) -> Vec<usize> {
        let w = self.window_len as i64;
        let spacing = sample_rate_hz / self.window_len as f64;
        let half = ((bandwidth_hz / 2.0) / spacing).round() as i64;
        let half = half.clamp(1, w / 2);
        (-half..half).map(|k| k.rem_euclid(w) as usize).collect()
    }
}

/// `W x M` short-time Fourier transform of one capture.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Row `k` is DFT bin `k` (frequency `k * f_S / W`, wrapping to negative
    /// frequencies above `W/2`); column `m` is the frame starting at `m * R`.
    pub bins: Grid<Complex64>,
    pub config: StftConfig,
    pub power_tag: Option<PowerTag>,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.bins.cols()
    }

    /// `10 log10(|S|^2)`, floored so empty bins stay finite.
    pub fn power_db(&self) -> Grid<f64> {
        self.bins.map(|z| 10.0 * (z.norm_sqr() + POWER_FLOOR).log10())
    }
}

/// Power added before taking logs of spectrogram magnitudes (-200 dB).
pub const POWER_FLOOR: f64 = 1e-20;

/// Windowed, hopped DFT: `S[k, m] = sum_n s[n + mR] g[n] e^{-j 2 pi k n / W}`.
pub fn stft(signal: &BasebandSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let w = cfg.window_len;
    let frames = cfg.frames_for(signal.len())?;
    let window = cfg.coefficients();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(w);
    let mut columns = vec![Complex64::new(0.0, 0.0); frames * w];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (m, col) in columns.chunks_exact_mut(w).enumerate() {
        let start = m * cfg.hop;
        for ((dst, &x), &g) in col
            .iter_mut()
            .zip(&signal.samples[start..start + w])
            .zip(&window)
        {
            *dst = x * g;
        }
        fft.process_with_scratch(col, &mut scratch);
    }
    // Transpose frame-major columns into the bin-major grid.
    let mut data = vec![Complex64::new(0.0, 0.0); frames * w];
    for (m, col) in columns.chunks_exact(w).enumerate() {
        for (k, &v) in col.iter().enumerate() {
            data[k * frames + m] = v;
        }
    }
    Ok(Spectrogram {
        bins: Grid::from_vec(w, frames, data),
        config: *cfg,
        power_tag: None,
    })
}

/// Number of STFT frames for a `K`-symbol preamble:
/// `floor((K * 2^SF / B * f_S - W) / R) + 1`, with the sample count floored.
pub fn frame_count(
    preamble_symbols: usize,
    spreading_factor: u32,
    bandwidth_hz: f64,
    sample_rate_hz: f64,
    window_len: usize,
    hop: usize,
) -> Result<usize> {
    if preamble_symbols == 0
        || bandwidth_hz <= 0.0
        || sample_rate_hz <= 0.0
        || window_len == 0
        || hop == 0
    {
        return Err(Error::Input("frame_count arguments must be positive".into()));
    }
    let samples = (preamble_symbols as f64 * (1u64 << spreading_factor) as f64 * sample_rate_hz
        / bandwidth_hz
        + 1e-9)
        .floor() as usize;
    StftConfig {
        window_len,
        hop,
        window: WindowKind::Hamming,
    }
    .frames_for(samples)
}

/// [`frame_count`] for a full LoRa configuration.
pub fn frame_count_for(cfg: &LoRaConfig, stft_cfg: &StftConfig) -> Result<usize> {
    frame_count(
        cfg.preamble_symbols,
        cfg.spreading_factor,
        cfg.bandwidth_hz,
        cfg.sample_rate_hz,
        stft_cfg.window_len,
        stft_cfg.hop,
    )
}
