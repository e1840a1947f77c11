use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::BasebandSignal;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay: usize,
    pub gain: Complex64,
}

/// Multiplicative per-sample gain applied after the tapped delay line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeVariation {
    Flat,
    /// `1 + depth * sin(2 pi rate n / fs + phase)`, `0 <= depth < 1`.
    Sinusoidal { depth: f64, rate_hz: f64, phase: f64 },
    /// Log-amplitude first-order Gauss-Markov process, unit mean gain.
    GaussMarkov { std: f64, coherence_s: f64, seed: u64 },
    /// Gain 1 before `at_sample`, `factor` from it on. Used to inject
    /// abrupt fades.
    Step { at_sample: usize, factor: f64 },
    /// Explicit trajectory; the last value is held past the end.
    Samples { gains: Vec<f64> },
}

/// Knot spacing of the Gauss-Markov process; gains are linearly
/// interpolated between knots.
const GM_KNOT: usize = 256;

impl TimeVariation {
    /// Gains for samples `start..start + len` at sample rate `fs`.
    pub fn trajectory(&self, start: usize, len: usize, fs: f64) -> Vec<f64> {
        match self {
            TimeVariation::Flat => vec![1.0; len],
            TimeVariation::Sinusoidal {
                depth,
                rate_hz,
                phase,
            } => (start..start + len)
                .map(|n| 1.0 + depth * (2.0 * PI * rate_hz * n as f64 / fs + phase).sin())
                .collect(),
            TimeVariation::Step { at_sample, factor } => (start..start + len)
                .map(|n| if n < *at_sample { 1.0 } else { *factor })
                .collect(),
            TimeVariation::Samples { gains } => (start..start + len)
                .map(|n| *gains.get(n).or(gains.last()).unwrap_or(&1.0))
                .collect(),
            TimeVariation::GaussMarkov {
                std,
                coherence_s,
                seed: s,
            } => {
                if *std == 0.0 {
                    return vec![1.0; len];
                }
                let knots = (start + len) / GM_KNOT + 2;
                let a = (-(GM_KNOT as f64) / (coherence_s * fs)).exp();
                let innov = (1.0 - a * a).sqrt() * std;
                let mut rng = seed::rng(*s);
                let z0: f64 = StandardNormal.sample(&mut rng);
                let mut x = std * z0;
                let mut log_gain = Vec::with_capacity(knots);
                for _ in 0..knots {
                    log_gain.push(x);
                    let w: f64 = StandardNormal.sample(&mut rng);
                    x = a * x + innov * w;
                }
                let bias = 0.5 * std * std;
                (start..start + len)
                    .map(|n| {
                        let k = n / GM_KNOT;
                        let frac = (n % GM_KNOT) as f64 / GM_KNOT as f64;
                        let lg = log_gain[k] * (1.0 - frac) + log_gain[k + 1] * frac;
                        (lg - bias).exp()
                    })
                    .collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            TimeVariation::Flat => true,
            TimeVariation::Sinusoidal { depth, rate_hz, .. } => {
                (0.0..1.0).contains(depth) && rate_hz.is_finite()
            }
            TimeVariation::GaussMarkov {
                std, coherence_s, ..
            } => *std >= 0.0 && std.is_finite() && *coherence_s > 0.0,
            TimeVariation::Step { factor, .. } => *factor > 0.0 && factor.is_finite(),
            TimeVariation::Samples { gains } => gains.iter().all(|g| *g > 0.0 && g.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "time variation must yield positive finite gains: {self:?}"
            )))
        }
    }
}

/// One draw of the propagation environment between a device and the receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub taps: Vec<Tap>,
    pub doppler_hz: f64,
    pub time_variation: TimeVariation,
    /// `None` means noise-free.
    pub snr_db: Option<f64>,
}

impl ChannelRealization {
    /// Single unit tap, no Doppler, no fading, no noise.
    pub fn identity() -> Self {
        ChannelRealization {
            taps: vec![Tap {
                delay: 0,
                gain: Complex64::new(1.0, 0.0),
            }],
            doppler_hz: 0.0,
            time_variation: TimeVariation::Flat,
            snr_db: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::Input("channel needs at least one tap".into()));
        }
        if self
            .taps
            .windows(2)
            .any(|w| w[1].delay <= w[0].delay)
        {
            return Err(Error::Input("tap delays must be strictly increasing".into()));
        }
        if self
            .taps
            .iter()
            .any(|t| !t.gain.re.is_finite() || !t.gain.im.is_finite())
        {
            return Err(Error::Input("tap gains must be finite".into()));
        }
        if !self.doppler_hz.is_finite() {
            return Err(Error::Input("doppler must be finite".into()));
        }
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                return Err(Error::Input("snr must be finite or absent".into()));
            }
        }
        self.time_variation.validate()
    }

    /// Power-weighted RMS delay spread in samples.
    pub fn rms_delay_spread(&self) -> f64 {
        let total: f64 = self.taps.iter().map(|t| t.gain.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let mean: f64 = self
            .taps
            .iter()
            .map(|t| t.gain.norm_sqr() * t.delay as f64)
            .sum::<f64>()
            / total;
        let second: f64 = self
            .taps
            .iter()
            .map(|t| t.gain.norm_sqr() * (t.delay as f64).powi(2))
            .sum::<f64>()
            / total;
        (second - mean * mean).max(0.0).sqrt()
    }

    /// Noise-free propagation of `signal`, treating its first sample as
    /// absolute sample `offset` of the channel's time axis.
    pub(crate) fn propagate(&self, signal: &BasebandSignal, offset: usize) -> Vec<Complex64> {
        let n = signal.len();
        let x = &signal.samples;
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for tap in &self.taps {
            if tap.delay >= n {
                continue;
            }
            for (out, &inp) in y[tap.delay..].iter_mut().zip(x.iter()) {
                *out += tap.gain * inp;
            }
        }
        let gains = self.time_variation.trajectory(offset, n, signal.sample_rate);
        let w = 2.0 * PI * self.doppler_hz / signal.sample_rate;
        for (i, (out, g)) in y.iter_mut().zip(gains).enumerate() {
            let rot = if self.doppler_hz == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(1.0, w * (offset + i) as f64)
            };
            *out *= rot * g;
        }
        y
    }
}

pub(crate) fn add_noise(samples: &mut [Complex64], noise_power: f64, seed_value: u64) {
    if noise_power <= 0.0 {
        return;
    }
    let sigma = (noise_power / 2.0).sqrt();
    let mut rng = seed::rng(seed_value);
    for z in samples.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *z += Complex64::new(sigma * re, sigma * im);
    }
}

/// Convolve with the taps, apply the gain trajectory and Doppler phasor,
/// then add circular Gaussian noise at `snr_db` relative to the
/// post-channel signal power.
pub fn apply_channel(
    signal: &BasebandSignal,
    ch: &ChannelRealization,
    seed_value: u64,
) -> Result<BasebandSignal> {
    signal.validate()?;
    ch.validate()?;
    let mut y = ch.propagate(signal, 0);
    if let Some(snr) = ch.snr_db {
        let p = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / y.len() as f64;
        add_noise(&mut y, p / 10f64.powf(snr / 10.0), seed_value);
    }
    Ok(BasebandSignal {
        samples: y,
        sample_rate: signal.sample_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Chamber,
    Indoor,
    Outdoor,
}

impl Environment {
    pub fn name(self) -> &'static str {
        match self {
            Environment::Chamber => "chamber",
            Environment::Indoor => "indoor",
            Environment::Outdoor => "outdoor",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl std::str::FromStr for Environment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chamber" => Ok(Environment::Chamber),
            "indoor" => Ok(Environment::Indoor),
            "outdoor" => Ok(Environment::Outdoor),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

/// Distributions a channel draw is sampled from. Ranges are inclusive
/// `[min, max]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentPreset {
    pub taps: [usize; 2],
    pub max_delay_samples: usize,
    /// Exponential power-delay-profile decay constant, samples.
    pub delay_decay_samples: f64,
    pub doppler_hz: [f64; 2],
    pub snr_db: [f64; 2],
    /// Log-amplitude standard deviation of the Gauss-Markov gain.
    pub variation_std: f64,
    pub coherence_s: f64,
}

impl EnvironmentPreset {
    fn validate(&self, env: Environment) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{} preset: {what}", env.name())));
        if self.taps[0] == 0 || self.taps[0] > self.taps[1] {
            return bad("tap count range must satisfy 1 <= min <= max");
        }
        if self.max_delay_samples + 1 < self.taps[1] {
            return bad("max delay too short for the tap count");
        }
        if self.delay_decay_samples <= 0.0 && self.taps[1] > 1 {
            return bad("delay decay must be positive");
        }
        if self.doppler_hz[0] > self.doppler_hz[1] || self.snr_db[0] > self.snr_db[1] {
            return bad("ranges must be ordered");
        }
        if self.variation_std < 0.0 || self.coherence_s <= 0.0 {
            return bad("variation std must be >= 0 and coherence > 0");
        }
        Ok(())
    }
}

/// Per-environment channel distributions; loadable from the `[channels]`
/// table of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelPresets {
    pub chamber: EnvironmentPreset,
    pub indoor: EnvironmentPreset,
    pub outdoor: EnvironmentPreset,
}

impl Default for ChannelPresets {
    fn default() -> Self {
        ChannelPresets {
            chamber: EnvironmentPreset {
                taps: [1, 1],
                max_delay_samples: 0,
                delay_decay_samples: 1.0,
                doppler_hz: [0.0, 0.0],
                snr_db: [40.0, 40.0],
                variation_std: 0.0,
                coherence_s: 1.0,
            },
            indoor: EnvironmentPreset {
                taps: [2, 4],
                max_delay_samples: 8,
                delay_decay_samples: 3.0,
                doppler_hz: [0.5, 3.0],
                snr_db: [20.0, 30.0],
                variation_std: 0.02,
                coherence_s: 5.0,
            },
            outdoor: EnvironmentPreset {
                taps: [4, 8],
                max_delay_samples: 24,
                delay_decay_samples: 8.0,
                doppler_hz: [5.0, 20.0],
                snr_db: [12.0, 22.0],
                variation_std: 0.05,
                coherence_s: 1.0,
            },
        }
    }
}

impl ChannelPresets {
    pub fn get(&self, env: Environment) -> &EnvironmentPreset {
        match env {
            Environment::Chamber => &self.chamber,
            Environment::Indoor => &self.indoor,
            Environment::Outdoor => &self.outdoor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for env in [Environment::Chamber, Environment::Indoor, Environment::Outdoor] {
            self.get(env).validate(env)?;
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// Draw a channel for `env`. The chamber is always a single unit tap with
/// no Doppler and no fading; the other environments sample tap count,
/// delays, Rayleigh tap gains, Doppler, SNR and a Gauss-Markov gain
/// trajectory from their preset.
pub fn sample_channel(
    env: Environment,
    presets: &ChannelPresets,
    seed_value: u64,
) -> Result<ChannelRealization> {
    let preset = presets.get(env);
    preset.validate(env)?;
    let mut rng = seed::rng(seed::derive(seed_value, &[0xC4A7, env.tag()]));
    let snr = uniform(&mut rng, preset.snr_db);
    if env == Environment::Chamber {
        let mut ch = ChannelRealization::identity();
        ch.snr_db = Some(snr);
        return Ok(ch);
    }
    let count = rng.random_range(preset.taps[0]..=preset.taps[1]);
    let mut delays = vec![0usize];
    if count > 1 {
        let mut extra: Vec<usize> = index::sample(&mut rng, preset.max_delay_samples, count - 1)
            .into_iter()
            .map(|d| d + 1)
            .collect();
        extra.sort_unstable();
        delays.extend(extra);
    }
    let weights: Vec<f64> = delays
        .iter()
        .map(|&d| (-(d as f64) / preset.delay_decay_samples).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let taps = delays
        .iter()
        .zip(&weights)
        .map(|(&delay, &w)| {
            let s = (w / total / 2.0).sqrt();
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Tap {
                delay,
                gain: Complex64::new(s * re, s * im),
            }
        })
        .collect();
    let doppler_hz = uniform(&mut rng, preset.doppler_hz);
    let time_variation = TimeVariation::GaussMarkov {
        std: preset.variation_std,
        coherence_s: preset.coherence_s,
        seed: rng.random(),
    };
    Ok(ChannelRealization {
        taps,
        doppler_hz,
        time_variation,
        snr_db: Some(snr),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_preamble, LoRaConfig};

    fn random_signal(n: usize, s: u64) -> BasebandSignal {
        let mut rng = seed::rng(s);
        let samples = (0..n)
            .map(|_| {
                Complex64::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        BasebandSignal::new(samples, 1e6).unwrap()
    }

    #[test]
    fn identity_channel_is_transparent() {
        let x = generate_preamble(&LoRaConfig::default()).unwrap();
        let y = apply_channel(&x, &ChannelRealization::identity(), 1).unwrap();
        assert_eq!(x.samples, y.samples);
    }

    #[test]
    fn scalar_channel_scales() {
        let x = random_signal(64, 2);
        let mut ch = ChannelRealization::identity();
        ch.taps[0].gain = Complex64::from_polar(0.5, PI / 2.0);
        let y = apply_channel(&x, &ch, 1).unwrap();
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert!((b - a * Complex64::new(0.0, 0.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn two_tap_channel_matches_direct_convolution() {
        let x = random_signal(200, 3);
        let mut ch = ChannelRealization::identity();
        ch.taps = vec![
            Tap {
                delay: 0,
                gain: Complex64::new(0.8, -0.1),
            },
            Tap {
                delay: 3,
                gain: Complex64::new(-0.2, 0.4),
            },
        ];
        let y = apply_channel(&x, &ch, 1).unwrap();
        // h as a dense impulse response, then the textbook convolution sum.
        let mut h = vec![Complex64::new(0.0, 0.0); 4];
        h[0] = ch.taps[0].gain;
        h[3] = ch.taps[1].gain;
        for n in 0..x.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, hk) in h.iter().enumerate() {
                if n >= k {
                    acc += hk * x.samples[n - k];
                }
            }
            assert!((acc - y.samples[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_is_deterministic_and_at_requested_snr() {
        let x = generate_preamble(&LoRaConfig::default()).unwrap();
        let mut ch = ChannelRealization::identity();
        ch.snr_db = Some(10.0);
        let a = apply_channel(&x, &ch, 5).unwrap();
        let b = apply_channel(&x, &ch, 5).unwrap();
        assert_eq!(a, b);
        let noise_p = a
            .samples
            .iter()
            .zip(&x.samples)
            .map(|(y, s)| (y - s).norm_sqr())
            .sum::<f64>()
            / x.len() as f64;
        assert!((10.0 * noise_p.log10() + 10.0).abs() < 0.1);
    }

    #[test]
    fn chamber_is_unit_tap() {
        let ch = sample_channel(Environment::Chamber, &ChannelPresets::default(), 4).unwrap();
        assert_eq!(ch.taps, vec![Tap { delay: 0, gain: Complex64::new(1.0, 0.0) }]);
        assert_eq!(ch.doppler_hz, 0.0);
    }

    #[test]
    fn indoor_draws_vary_with_seed() {
        let p = ChannelPresets::default();
        let a = sample_channel(Environment::Indoor, &p, 1).unwrap();
        let b = sample_channel(Environment::Indoor, &p, 2).unwrap();
        assert_ne!(a.taps[0].gain, b.taps[0].gain);
        assert!((2..=4).contains(&a.taps.len()));
        a.validate().unwrap();
        assert_eq!(a, sample_channel(Environment::Indoor, &p, 1).unwrap());
    }

    #[test]
    fn outdoor_delay_spread_exceeds_indoor_on_average() {
        let p = ChannelPresets::default();
        let mean = |env| {
            (0..100)
                .map(|s| sample_channel(env, &p, s).unwrap().rms_delay_spread())
                .sum::<f64>()
                / 100.0
        };
        assert!(mean(Environment::Outdoor) >= mean(Environment::Indoor));
    }

    #[test]
    fn gauss_markov_gain_is_positive_with_unit_mean() {
        let tv = TimeVariation::GaussMarkov {
            std: 0.2,
            coherence_s: 0.01,
            seed: 9,
        };
        let g = tv.trajectory(0, 2_000_000, 1e6);
        assert!(g.iter().all(|&v| v > 0.0));
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
        // Continuation: a window starting mid-stream equals the slice.
        let tail = tv.trajectory(1000, 500, 1e6);
        assert_eq!(&g[1000..1500], &tail[..]);
    }

    #[test]
    fn rejects_bad_channels() {
        let mut ch = ChannelRealization::identity();
        ch.taps.clear();
        assert!(ch.validate().is_err());
        let mut ch = ChannelRealization::identity();
        ch.taps.push(Tap {
            delay: 0,
            gain: Complex64::new(1.0, 0.0),
        });
        assert!(ch.validate().is_err());
        let mut ch = ChannelRealization::identity();
        ch.time_variation = TimeVariation::Samples { gains: vec![1.0, -1.0] };
        assert!(ch.validate().is_err());
    }
}
