use serde::{Deserialize, Serialize};

use super::channel::add_noise;
use super::{
    apply_pa, generate_preamble, BasebandSignal, ChannelRealization, DeviceProfile, Environment,
    LoRaConfig, PowerLevel,
};
use crate::error::Result;
use crate::seed;

/// Where a capture pair came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub environment: Option<Environment>,
    pub seed: u64,
}

/// Consecutive high- and low-power preambles from one device through one
/// channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturePair {
    pub high: BasebandSignal,
    pub low: BasebandSignal,
    pub device_id: String,
    pub claimed_id: String,
    pub channel_meta: ChannelMeta,
}

/// Transmit the preamble at high power, then immediately again at low power,
/// through the same channel. The channel's gain trajectory and Doppler phase
/// run on across the pair, so the low-power capture sees samples `N..2N` of
/// the channel's time axis. Noise power is set by `snr_db` relative to the
/// high-power capture and shared by both halves (a fixed receiver noise
/// floor).
pub fn synthesize_capture(
    dev: &DeviceProfile,
    ch: &ChannelRealization,
    cfg: &LoRaConfig,
    seed_value: u64,
) -> Result<CapturePair> {
    synthesize_capture_with(dev, ch, cfg, seed_value, PowerLevel::HIGH, PowerLevel::LOW)
}

pub(crate) fn synthesize_capture_with(
    dev: &DeviceProfile,
    ch: &ChannelRealization,
    cfg: &LoRaConfig,
    seed_value: u64,
    high_power: PowerLevel,
    low_power: PowerLevel,
) -> Result<CapturePair> {
    ch.validate()?;
    let preamble = generate_preamble(cfg)?;
    let n = preamble.len();
    let tx_high = apply_pa(&preamble, dev, high_power)?;
    let tx_low = apply_pa(&preamble, dev, low_power)?;
    let mut high = ch.propagate(&tx_high, 0);
    let mut low = ch.propagate(&tx_low, n);
    if let Some(snr) = ch.snr_db {
        let p = high.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let noise = p / 10f64.powf(snr / 10.0);
        add_noise(&mut high, noise, seed::derive(seed_value, &[1]));
        add_noise(&mut low, noise, seed::derive(seed_value, &[2]));
    }
    let fs = cfg.sample_rate_hz;
    Ok(CapturePair {
        high: BasebandSignal {
            samples: high,
            sample_rate: fs,
        },
        low: BasebandSignal {
            samples: low,
            sample_rate: fs,
        },
        device_id: dev.device_id.clone(),
        claimed_id: dev.device_id.clone(),
        channel_meta: ChannelMeta {
            environment: None,
            seed: seed_value,
        },
    })
}
