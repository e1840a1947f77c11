//! Baseband simulation of LoRa preambles, per-device power-amplifier
//! nonlinearity and time-varying multipath channels.

mod capture;
mod channel;
pub mod dataset;
mod lora;
mod pa;

pub use capture::{synthesize_capture, CapturePair, ChannelMeta};
pub use channel::{
    apply_channel, sample_channel, ChannelPresets, ChannelRealization, Environment,
    EnvironmentPreset, Tap, TimeVariation,
};
pub use lora::{generate_preamble, LoRaConfig};
pub use pa::{
    apply_pa, sample_device_population, DeviceProfile, PowerLevel, PowerTag, SalehParams,
    NOMINAL_SALEH, PERTURBATION_BOUND,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, nonempty run of complex baseband samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

impl BasebandSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        let s = BasebandSignal {
            samples,
            sample_rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Input("baseband signal is empty".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Input(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if self
            .samples
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Input("baseband signal has non-finite samples".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of |x|^2.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}
