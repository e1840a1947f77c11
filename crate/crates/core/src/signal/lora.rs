use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::BasebandSignal;
use crate::error::{Error, Result};

/// Chirp spread spectrum parameters of the preamble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoRaConfig {
    pub spreading_factor: u32,
    pub bandwidth_hz: f64,
    pub sample_rate_hz: f64,
    pub preamble_symbols: usize,
    pub carrier_offset_hz: f64,
}

impl Default for LoRaConfig {
    /// SF10 at 62.5 kHz sampled at 1 MHz with a ten-symbol preamble.
    fn default() -> Self {
        LoRaConfig {
            spreading_factor: 10,
            bandwidth_hz: 62.5e3,
            sample_rate_hz: 1e6,
            preamble_symbols: 10,
            carrier_offset_hz: 0.0,
        }
    }
}

impl LoRaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(7..=12).contains(&self.spreading_factor) {
            return Err(Error::Config(format!(
                "spreading factor {} outside 7..=12",
                self.spreading_factor
            )));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if !(self.sample_rate_hz >= self.bandwidth_hz && self.sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample rate {} Hz below bandwidth {} Hz",
                self.sample_rate_hz, self.bandwidth_hz
            )));
        }
        if self.preamble_symbols == 0 {
            return Err(Error::Config("preamble needs at least one symbol".into()));
        }
        if !self.carrier_offset_hz.is_finite() {
            return Err(Error::Config("carrier offset must be finite".into()));
        }
        self.exact_samples_per_symbol().map(|_| ())
    }

    fn exact_samples_per_symbol(&self) -> Result<usize> {
        let sps = (1u64 << self.spreading_factor) as f64 / self.bandwidth_hz * self.sample_rate_hz;
        let rounded = sps.round();
        if rounded < 1.0 || (sps - rounded).abs() > 1e-9 * sps.max(1.0) {
            return Err(Error::Config(format!(
                "samples per symbol {sps} is not a positive integer"
            )));
        }
        Ok(rounded as usize)
    }

    /// Samples in one chirp symbol, 2^SF / B * f_S.
    pub fn samples_per_symbol(&self) -> usize {
        self.exact_samples_per_symbol()
            .expect("samples_per_symbol on an invalid LoRaConfig")
    }

    pub fn preamble_len(&self) -> usize {
        self.samples_per_symbol() * self.preamble_symbols
    }

    pub fn symbol_duration_s(&self) -> f64 {
        (1u64 << self.spreading_factor) as f64 / self.bandwidth_hz
    }
}

/// `K` identical up-chirps sweeping -B/2 to +B/2, unit amplitude.
pub fn generate_preamble(cfg: &LoRaConfig) -> Result<BasebandSignal> {
    cfg.validate()?;
    let sps = cfg.samples_per_symbol();
    let fs = cfg.sample_rate_hz;
    let b = cfg.bandwidth_hz;
    let rate = b / cfg.symbol_duration_s();
    let symbol: Vec<f64> = (0..sps)
        .map(|n| {
            let t = n as f64 / fs;
            2.0 * PI * (-0.5 * b * t + 0.5 * rate * t * t)
        })
        .collect();
    let mut samples = Vec::with_capacity(sps * cfg.preamble_symbols);
    for k in 0..cfg.preamble_symbols {
        for (n, &phase) in symbol.iter().enumerate() {
            let idx = (k * sps + n) as f64;
            let cfo = 2.0 * PI * cfg.carrier_offset_hz * idx / fs;
            samples.push(Complex64::from_polar(1.0, phase + cfo));
        }
    }
    BasebandSignal::new(samples, fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_config_has_163840_samples() {
        let sig = generate_preamble(&LoRaConfig::default()).unwrap();
        assert_eq!(sig.len(), 163_840);
    }

    #[test]
    fn critical_sampling_single_symbol_is_unit_envelope() {
        let cfg = LoRaConfig {
            spreading_factor: 7,
            bandwidth_hz: 125e3,
            sample_rate_hz: 125e3,
            preamble_symbols: 1,
            carrier_offset_hz: 0.0,
        };
        let sig = generate_preamble(&cfg).unwrap();
        assert_eq!(sig.len(), 128);
        for z in &sig.samples {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn instantaneous_frequency_sweeps_linearly() {
        let cfg = LoRaConfig {
            spreading_factor: 8,
            bandwidth_hz: 62.5e3,
            sample_rate_hz: 250e3,
            preamble_symbols: 2,
            carrier_offset_hz: 0.0,
        };
        let sig = generate_preamble(&cfg).unwrap();
        let sps = cfg.samples_per_symbol();
        assert_eq!(sps, 1024);
        let fs = cfg.sample_rate_hz;
        let chirp_rate = cfg.bandwidth_hz / cfg.symbol_duration_s();
        for k in 0..2 {
            for n in 0..sps - 1 {
                let a = sig.samples[k * sps + n];
                let b = sig.samples[k * sps + n + 1];
                // Phase increment over one sample, mapped to frequency.
                let f_est = (b * a.conj()).arg() * fs / (2.0 * PI);
                // Closed form: the mean frequency over [n, n+1] samples.
                let t_mid = (n as f64 + 0.5) / fs;
                let f_true = -cfg.bandwidth_hz / 2.0 + chirp_rate * t_mid;
                assert!((f_est - f_true).abs() < 1e-6, "k={k} n={n} {f_est} vs {f_true}");
            }
        }
        let first = (sig.samples[1] * sig.samples[0].conj()).arg() * fs / (2.0 * PI);
        let last =
            (sig.samples[sps - 1] * sig.samples[sps - 2].conj()).arg() * fs / (2.0 * PI);
        assert!((first + 31_250.0).abs() < 100.0);
        assert!((last - 31_250.0).abs() < 100.0);
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut cfg = LoRaConfig::default();
        cfg.spreading_factor = 13;
        assert!(matches!(generate_preamble(&cfg), Err(Error::Config(_))));
        let mut cfg = LoRaConfig::default();
        cfg.sample_rate_hz = 1e4;
        assert!(cfg.validate().is_err());
        let mut cfg = LoRaConfig::default();
        cfg.sample_rate_hz = 1e6 + 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = LoRaConfig::default();
        cfg.preamble_symbols = 0;
        assert!(cfg.validate().is_err());
    }
}
