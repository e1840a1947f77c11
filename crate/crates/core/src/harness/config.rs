//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::TrainHyper;
use crate::detection::DetectorConfig;
use crate::feature::{FeatureConfig, FeatureKind};
use crate::signal::{ChannelPresets, Environment, LoRaConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Population {
    pub legit: usize,
    pub rogue: usize,
    /// Give every rogue the first legitimate device's amplifier (an
    /// indistinguishable attacker).
    pub clone_rogues: bool,
}

impl Default for Population {
    fn default() -> Self {
        Population {
            legit: 5,
            rogue: 2,
            clone_rogues: false,
        }
    }
}

/// Epoch budgets and learning rates for the two training modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    pub scratch: TrainHyper,
    pub transfer: TrainHyper,
}

impl Default for Training {
    fn default() -> Self {
        Training {
            scratch: TrainHyper::scratch(0),
            transfer: TrainHyper::transfer(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Classification {
    /// Deployment environment of enrollment and test captures.
    pub environment: Environment,
    /// Chamber captures per device for the base model.
    pub base_samples: usize,
    /// Enrollment sizes swept, per device.
    pub train_samples: Vec<usize>,
    pub test_samples: usize,
    pub features: Vec<FeatureKind>,
    /// Enrollment size whose models the impersonation scenario evaluates.
    pub impersonation_samples: usize,
}

impl Default for Classification {
    fn default() -> Self {
        Classification {
            environment: Environment::Indoor,
            base_samples: 200,
            train_samples: vec![50, 100, 150, 200],
            test_samples: 100,
            features: vec![FeatureKind::Quotient, FeatureKind::Spectrogram],
            impersonation_samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Contamination {
    /// Image side of the classifiers inside the detection loop.
    pub image_size: usize,
    pub feature: FeatureKind,
    pub train_samples: Vec<usize>,
    /// Query observations per device in each difference matrix.
    pub query_samples: usize,
    /// Classifier pairs whose matrices train the detector.
    pub normal_pairs: usize,
    /// Classifier pairs whose matrices measure the false-alarm rate.
    pub heldout_pairs: usize,
    /// Contaminated classifier pairs (random target and rogue each).
    pub attack_pairs: usize,
    pub matrices_per_pair: usize,
    /// Enrollment size of the vulnerability and sign-property checks.
    pub vulnerability_samples: usize,
    pub detector: DetectorConfig,
}

impl Default for Contamination {
    fn default() -> Self {
        Contamination {
            image_size: 32,
            feature: FeatureKind::Quotient,
            train_samples: vec![50, 100, 150, 200],
            query_samples: 20,
            normal_pairs: 12,
            heldout_pairs: 4,
            attack_pairs: 10,
            matrices_per_pair: 8,
            vulnerability_samples: 100,
            detector: DetectorConfig {
                image_size: 32,
                embed_dim: 64,
                ..DetectorConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub population: Population,
    pub lora: LoRaConfig,
    pub channels: ChannelPresets,
    pub feature: FeatureConfig,
    pub training: Training,
    pub classification: Classification,
    pub contamination: Contamination,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "desk".into(),
            seed: 1,
            output_dir: PathBuf::from("out"),
            population: Population::default(),
            lora: LoRaConfig::default(),
            channels: ChannelPresets::default(),
            feature: FeatureConfig::default(),
            training: Training::default(),
            classification: Classification::default(),
            contamination: Contamination::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse `text`, then apply `key.path=value` overrides. Values are read
    /// as TOML and fall back to plain strings.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = path.split_last().expect("split yields one item");
            let mut cur = &mut table;
            for p in parents {
                let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
                cur = entry
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
            }
            cur.insert(last.to_string(), value);
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(path, &[])
    }

    pub fn load_with(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.population.legit < 2 {
            return bad("need at least two legitimate devices");
        }
        self.lora.validate()?;
        self.channels.validate()?;
        self.feature.validate()?;
        self.training.scratch.validate()?;
        self.training.transfer.validate()?;
        let c = &self.classification;
        if c.train_samples.is_empty() || c.train_samples.contains(&0) {
            return bad("classification.train_samples must be nonempty and positive");
        }
        if c.base_samples == 0 || c.test_samples == 0 {
            return bad("base and test sample counts must be positive");
        }
        if c.features.is_empty() || c.features.contains(&FeatureKind::Diff) {
            return bad("classification.features must list quotient and/or spectrogram");
        }
        if !c.train_samples.contains(&c.impersonation_samples) {
            return bad("impersonation_samples must be one of train_samples");
        }
        let k = &self.contamination;
        if k.feature == FeatureKind::Diff {
            return bad("contamination.feature must be quotient or spectrogram");
        }
        if k.train_samples.is_empty() || k.train_samples.contains(&0) {
            return bad("contamination.train_samples must be nonempty and positive");
        }
        if k.query_samples == 0 || k.query_samples > c.test_samples {
            return bad("contamination.query_samples must be in 1..=test_samples");
        }
        if k.normal_pairs < 2 || k.matrices_per_pair == 0 {
            return bad("need at least two normal pairs and one matrix per pair");
        }
        if k.attack_pairs > 0 && self.population.rogue == 0 {
            return bad("contamination attacks need rogue devices");
        }
        if self.population.rogue > 0 && k.train_samples.iter().any(|&n| n > self.train_pool()) {
            return bad("rogue pool is smaller than an enrollment share");
        }
        if !k.train_samples.contains(&k.vulnerability_samples) {
            return bad("vulnerability_samples must be one of contamination.train_samples");
        }
        Ok(())
    }

    /// Deployment training captures generated per device.
    pub fn train_pool(&self) -> usize {
        let a = self.classification.train_samples.iter().max().copied().unwrap_or(0);
        let b = self.contamination.train_samples.iter().max().copied().unwrap_or(0);
        a.max(b)
    }

    /// Image sides the experiments need.
    pub fn image_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.feature.image_size, self.contamination.image_size];
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    doc.parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
