use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BasebandSignal;
use crate::error::{Error, Result};
use crate::seed;

/// Saleh AM/AM and AM/PM coefficients.
///
/// `A(r) = am_alpha * r / (1 + am_beta * r^2)` and
/// `Phi(r) = pm_alpha * r^2 / (1 + pm_beta * r^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalehParams {
    pub am_alpha: f64,
    pub am_beta: f64,
    pub pm_alpha: f64,
    pub pm_beta: f64,
}

pub const NOMINAL_SALEH: SalehParams = SalehParams {
    am_alpha: 2.0,
    am_beta: 1.0,
    pm_alpha: PI / 6.0,
    pm_beta: 1.0,
};

/// Largest relative deviation of any device coefficient from nominal.
pub const PERTURBATION_BOUND: f64 = 0.1;

impl SalehParams {
    pub fn am_gain(&self, r: f64) -> f64 {
        self.am_alpha * r / (1.0 + self.am_beta * r * r)
    }

    pub fn pm_rotation(&self, r: f64) -> f64 {
        let r2 = r * r;
        self.pm_alpha * r2 / (1.0 + self.pm_beta * r2)
    }

    /// AM/AM saturates at `1 / sqrt(am_beta)`; the curve is strictly
    /// increasing below that amplitude.
    pub fn saturation_amplitude(&self) -> f64 {
        1.0 / self.am_beta.sqrt()
    }

    fn as_array(&self) -> [f64; 4] {
        [self.am_alpha, self.am_beta, self.pm_alpha, self.pm_beta]
    }
}

/// One virtual transmitter: the ground-truth fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    pub pa: SalehParams,
    pub perturbation_seed: u64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        let nominal = NOMINAL_SALEH.as_array();
        let actual = self.pa.as_array();
        if self.pa.am_beta <= 0.0 {
            return Err(Error::Input(format!(
                "{}: am_beta must be positive",
                self.device_id
            )));
        }
        for (a, n) in actual.iter().zip(nominal) {
            if ((a / n) - 1.0).abs() > PERTURBATION_BOUND + 1e-12 {
                return Err(Error::Input(format!(
                    "{}: coefficient {a} deviates more than 10% from nominal {n}",
                    self.device_id
                )));
            }
        }
        Ok(())
    }

    /// Relative deviations of (am_alpha, am_beta, pm_alpha, pm_beta) from nominal.
    pub fn perturbations(&self) -> [f64; 4] {
        let n = NOMINAL_SALEH.as_array();
        let a = self.pa.as_array();
        [a[0] / n[0] - 1.0, a[1] / n[1] - 1.0, a[2] / n[2] - 1.0, a[3] / n[3] - 1.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerTag {
    High,
    Low,
}

/// Transmit power setting of one capture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLevel {
    pub tag: PowerTag,
    pub tx_power_dbm: f64,
}

impl PowerLevel {
    pub const REFERENCE_DBM: f64 = 17.0;
    pub const REFERENCE_DRIVE: f64 = 0.9;

    pub const HIGH: PowerLevel = PowerLevel {
        tag: PowerTag::High,
        tx_power_dbm: 17.0,
    };
    pub const LOW: PowerLevel = PowerLevel {
        tag: PowerTag::Low,
        tx_power_dbm: 10.0,
    };

    /// Normalized PA input amplitude: 17 dBm drives the amplifier at 0.9 and
    /// other settings scale in amplitude by 10^(dP/20).
    pub fn drive_amplitude(&self) -> f64 {
        Self::REFERENCE_DRIVE * 10f64.powf((self.tx_power_dbm - Self::REFERENCE_DBM) / 20.0)
    }
}

/// Drive the signal to the amplitude implied by `power`, then apply the
/// device's memoryless Saleh distortion sample by sample.
pub fn apply_pa(
    signal: &BasebandSignal,
    dev: &DeviceProfile,
    power: PowerLevel,
) -> Result<BasebandSignal> {
    signal.validate()?;
    let drive = power.drive_amplitude();
    let samples = signal
        .samples
        .iter()
        .map(|&x| {
            let r = drive * x.norm();
            if r == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let theta = x.arg() + dev.pa.pm_rotation(r);
            Complex64::from_polar(dev.pa.am_gain(r), theta)
        })
        .collect();
    Ok(BasebandSignal {
        samples,
        sample_rate: signal.sample_rate,
    })
}

/// `n` devices whose coefficients are independently perturbed around
/// [`NOMINAL_SALEH`] by a uniform factor in [-10%, +10%].
pub fn sample_device_population(n: usize, seed_value: u64) -> Result<Vec<DeviceProfile>> {
    if n == 0 {
        return Err(Error::Input("device population must be nonempty".into()));
    }
    Ok((0..n)
        .map(|i| {
            let dev_seed = seed::derive(seed_value, &[0xDE71CE, i as u64]);
            let mut rng = seed::rng(dev_seed);
            let mut draw = |nominal: f64| {
                nominal * (1.0 + rng.random_range(-PERTURBATION_BOUND..=PERTURBATION_BOUND))
            };
            let pa = SalehParams {
                am_alpha: draw(NOMINAL_SALEH.am_alpha),
                am_beta: draw(NOMINAL_SALEH.am_beta),
                pm_alpha: draw(NOMINAL_SALEH.pm_alpha),
                pm_beta: draw(NOMINAL_SALEH.pm_beta),
            };
            DeviceProfile {
                device_id: format!("DUT-{i:02}"),
                pa,
                perturbation_seed: dev_seed,
            }
        })
        .collect())
}
