//! Simulated capture corpora for the experiments.
//!
//! Every capture is keyed by `(device, pool, slot, attempt)` under the
//! experiment seed, so any capture can be regenerated on its own and train
//! and test pools never share a seed. Captures are analyzed and rasterized
//! as soon as they are drawn; only the images are kept.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::feature::{analyze_capture, frame_count_for, rasterize, CaptureAnalysis, ClipRange, FeatureImage, FeatureKind};
use crate::signal::{
    sample_channel, sample_device_population, synthesize_capture, CapturePair, DeviceProfile,
    Environment,
};
use crate::{par, seed, Error, Result};

/// Draws per slot before the filter's rejection becomes a data error.
pub const MAX_ATTEMPTS: u64 = 4;
/// Chamber captures averaged into a device's reference correlation.
pub const REFERENCE_CAPTURES: usize = 8;

const CALIBRATION_VALUES: usize = 1 << 21;
const TAG_POPULATION: u64 = 0x504F50;
const TAG_CAPTURE: u64 = 0xCA97;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Reference,
    ChamberTrain,
    ChamberTest,
    EnvTrain,
    EnvTest,
}

impl Pool {
    pub fn name(self) -> &'static str {
        match self {
            Pool::Reference => "reference",
            Pool::ChamberTrain => "chamber_train",
            Pool::ChamberTest => "chamber_test",
            Pool::EnvTrain => "env_train",
            Pool::EnvTest => "env_test",
        }
    }

    pub fn is_train(self) -> bool {
        matches!(self, Pool::Reference | Pool::ChamberTrain | Pool::EnvTrain)
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// Legitimate devices followed by rogues.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub legit: Vec<DeviceProfile>,
    pub rogue: Vec<DeviceProfile>,
}

impl Population {
    pub fn legit_ids(&self) -> Vec<String> {
        self.legit.iter().map(|d| d.device_id.clone()).collect()
    }

    pub fn rogue_ids(&self) -> Vec<String> {
        self.rogue.iter().map(|d| d.device_id.clone()).collect()
    }
}

/// Draw the population. Rogues come from the same coefficient distribution
/// and are renamed `ROGUE-xx`; with `clone_rogues` they copy the first
/// legitimate device's amplifier.
pub fn population(cfg: &ExperimentConfig) -> Result<Population> {
    let p = &cfg.population;
    let mut all = sample_device_population(p.legit + p.rogue, seed::derive(cfg.seed, &[TAG_POPULATION]))?;
    let mut rogue = all.split_off(p.legit);
    for (i, r) in rogue.iter_mut().enumerate() {
        r.device_id = format!("ROGUE-{i:02}");
        if p.clone_rogues {
            r.pa = all[0].pa;
        }
    }
    Ok(Population { legit: all, rogue })
}

/// Seed of one capture attempt. `device` indexes legit devices first, then
/// rogues.
pub fn capture_seed(base: u64, device: usize, pool: Pool, slot: usize, attempt: u64) -> u64 {
    seed::derive(base, &[TAG_CAPTURE, device as u64, pool.tag(), slot as u64, attempt])
}

/// One simulated capture pair through a fresh channel draw.
pub fn simulate(cfg: &ExperimentConfig, dev: &DeviceProfile, env: Environment, capture: u64) -> Result<CapturePair> {
    let ch = sample_channel(env, &cfg.channels, capture)?;
    let mut pair = synthesize_capture(dev, &ch, &cfg.lora, seed::derive(capture, &[1]))?;
    pair.channel_meta.environment = Some(env);
    pair.channel_meta.seed = capture;
    Ok(pair)
}

/// Rasterized views kept for each capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct View {
    pub kind: FeatureKind,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub seed: u64,
    pub rho: f64,
    images: Vec<(View, FeatureImage)>,
}

impl Sample {
    pub fn image(&self, view: View) -> &FeatureImage {
        self.images
            .iter()
            .find(|(v, _)| *v == view)
            .map(|(_, i)| i)
            .expect("view was rasterized")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceData {
    pub id: String,
    pub rho_ref: f64,
    pub pools: BTreeMap<Pool, Vec<Sample>>,
}

impl DeviceData {
    pub fn pool(&self, pool: Pool) -> &[Sample] {
        self.pools.get(&pool).map_or(&[], Vec::as_slice)
    }
}

/// Filter and quantizer bookkeeping carried into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub legit: Vec<String>,
    pub rogue: Vec<String>,
    pub environment: Environment,
    pub captures: usize,
    pub rejected: usize,
    pub clip: BTreeMap<FeatureKind, ClipRange>,
    pub rho_ref: BTreeMap<String, f64>,
    pub unguarded_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub population: Population,
    pub legit: Vec<DeviceData>,
    pub rogue: Vec<DeviceData>,
    pub views: Vec<View>,
    pub summary: CorpusSummary,
}

impl Corpus {
    pub fn device(&self, id: &str) -> Option<&DeviceData> {
        self.legit.iter().chain(&self.rogue).find(|d| d.id == id)
    }

    /// Fail if a capture seed sits in both a training and a test pool.
    pub fn check_split_hygiene(&self) -> Result<()> {
        let mut seen: HashMap<u64, bool> = HashMap::new();
        for d in self.legit.iter().chain(&self.rogue) {
            for (pool, samples) in &d.pools {
                for s in samples {
                    if let Some(prev) = seen.insert(s.seed, pool.is_train()) {
                        if prev != pool.is_train() {
                            return Err(Error::Input(format!(
                                "capture seed {} is in both train and test pools",
                                s.seed
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

struct Job<'a> {
    index: usize,
    dev: &'a DeviceProfile,
    env: Environment,
    pool: Pool,
    slot: usize,
}

struct Accepted {
    seed: u64,
    rho: f64,
    analysis: CaptureAnalysis,
    rejected: usize,
}

fn draw(cfg: &ExperimentConfig, job: &Job, rho_ref: Option<f64>) -> Result<Accepted> {
    let theta = cfg.feature.theta;
    let rows = cfg.feature.rows_for(&cfg.lora);
    for attempt in 0..MAX_ATTEMPTS {
        let s = capture_seed(cfg.seed, job.index, job.pool, job.slot, attempt);
        let pair = simulate(cfg, job.dev, job.env, s)?;
        let analysis = analyze_capture(&pair, &cfg.feature, &rows)?;
        let ok = match (analysis.rho, rho_ref) {
            (Some(r), Some(reference)) => (reference - r).abs() <= theta,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if ok {
            return Ok(Accepted {
                seed: s,
                rho: analysis.rho.unwrap_or(f64::NAN),
                analysis,
                rejected: attempt as usize,
            });
        }
    }
    Err(Error::Input(format!(
        "{} {} slot {}: every attempt failed the correlation filter",
        job.dev.device_id,
        job.pool.name(),
        job.slot
    )))
}

fn views_for(cfg: &ExperimentConfig) -> Vec<View> {
    let mut v: Vec<View> = cfg
        .classification
        .features
        .iter()
        .map(|&kind| View { kind, size: cfg.feature.image_size })
        .collect();
    v.push(View {
        kind: cfg.contamination.feature,
        size: cfg.contamination.image_size,
    });
    v.sort();
    v.dedup();
    v
}

fn rasterize_views(a: &CaptureAnalysis, views: &[View], clip: &BTreeMap<FeatureKind, ClipRange>, depth: u32) -> Result<Vec<(View, FeatureImage)>> {
    views
        .iter()
        .map(|&v| Ok((v, rasterize(a.matrix(v.kind), clip[&v.kind], v.size, depth, v.kind)?)))
        .collect()
}

/// Clip range of `kind` over the calibration analyses. Masked quotient bins
/// (exactly 0 dB) are left out so the quantizer spans the fingerprint
/// levels rather than the mask.
pub fn calibrate(analyses: &[CaptureAnalysis], kind: FeatureKind, p_lo: f64, p_hi: f64) -> Result<ClipRange> {
    if kind != FeatureKind::Quotient {
        return ClipRange::from_corpus(analyses.iter().map(|a| a.matrix(kind)), p_lo, p_hi);
    }
    let values: Vec<f64> = analyses
        .iter()
        .flat_map(|a| a.quotient_db.as_slice().iter().copied())
        .filter(|&v| v != 0.0)
        .collect();
    let stride = values.len().div_ceil(CALIBRATION_VALUES).max(1);
    ClipRange::from_values(values.into_iter().step_by(stride).collect(), p_lo, p_hi)
}

/// Simulate, filter and rasterize every pool of the experiment.
pub fn build_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    cfg.validate()?;
    let pop = population(cfg)?;
    let env = cfg.classification.environment;
    let views = views_for(cfg);
    let legit_n = pop.legit.len();
    let devices: Vec<(usize, &DeviceProfile)> = pop.legit.iter().chain(&pop.rogue).enumerate().collect();

    // Reference correlation of each device, measured without channel variation.
    let ref_jobs: Vec<Job> = devices
        .iter()
        .flat_map(|&(index, dev)| {
            (0..REFERENCE_CAPTURES).map(move |slot| Job { index, dev, env: Environment::Chamber, pool: Pool::Reference, slot })
        })
        .collect();
    let refs = par::try_map(&ref_jobs, |j| draw(cfg, j, None))?;
    let rho_ref: Vec<f64> = refs
        .chunks(REFERENCE_CAPTURES)
        .map(|c| c.iter().map(|a| a.rho).sum::<f64>() / c.len() as f64)
        .collect();
    if rho_ref.iter().any(|r| !r.is_finite()) {
        return Err(Error::Input("reference correlation undefined".into()));
    }

    let counts = [
        (Pool::ChamberTrain, Environment::Chamber, cfg.classification.base_samples, false),
        (Pool::ChamberTest, Environment::Chamber, cfg.classification.test_samples, false),
        (Pool::EnvTrain, env, cfg.train_pool(), true),
        (Pool::EnvTest, env, cfg.classification.test_samples, true),
    ];
    let mut jobs = Vec::new();
    for &(index, dev) in &devices {
        for &(pool, e, n, rogue_too) in &counts {
            if index >= legit_n && !rogue_too {
                continue;
            }
            jobs.extend((0..n).map(|slot| Job { index, dev, env: e, pool, slot }));
        }
    }

    // Quantizer range per feature from a calibration subset of the
    // legitimate training captures, chamber and deployment interleaved.
    let calib: Vec<&Job> = {
        let train: Vec<&Job> = jobs
            .iter()
            .filter(|j| j.index < legit_n && matches!(j.pool, Pool::ChamberTrain | Pool::EnvTrain))
            .collect();
        let mut order: Vec<&Job> = train.clone();
        order.sort_by_key(|j| (j.slot, j.pool, j.index));
        order.truncate(cfg.feature.clip_calibration);
        order
    };
    let calib_analyses = par::try_map(&calib, |j| draw(cfg, j, Some(rho_ref[j.index])).map(|a| a.analysis))?;
    let [p_lo, p_hi] = cfg.feature.clip_percentiles;
    let mut clip = BTreeMap::new();
    for v in &views {
        if !clip.contains_key(&v.kind) {
            let r = calibrate(&calib_analyses, v.kind, p_lo, p_hi)?;
            clip.insert(v.kind, r);
        }
    }
    drop(calib_analyses);

    let depth = cfg.feature.depth;
    let cells = (cfg.feature.stft.window_len * frame_count_for(&cfg.lora, &cfg.feature.stft)?) as f64;
    let drawn = par::try_map(&jobs, |j| {
        let a = draw(cfg, j, Some(rho_ref[j.index]))?;
        let images = rasterize_views(&a.analysis, &views, &clip, depth)?;
        let sample = Sample { seed: a.seed, rho: a.rho, images };
        Ok::<_, Error>((sample, a.rejected, a.analysis.unguarded as f64))
    })?;

    let mut data: Vec<DeviceData> = devices
        .iter()
        .map(|&(i, d)| DeviceData { id: d.device_id.clone(), rho_ref: rho_ref[i], pools: BTreeMap::new() })
        .collect();
    let mut rejected = 0;
    let mut unguarded = 0.0;
    let captures = drawn.len();
    for (job, (sample, rej, ung)) in jobs.iter().zip(drawn) {
        rejected += rej;
        unguarded += ung;
        data[job.index].pools.entry(job.pool).or_default().push(sample);
    }
    let rogue = data.split_off(legit_n);
    let summary = CorpusSummary {
        legit: pop.legit_ids(),
        rogue: pop.rogue_ids(),
        environment: env,
        captures,
        rejected,
        clip,
        rho_ref: data.iter().chain(&rogue).map(|d| (d.id.clone(), d.rho_ref)).collect(),
        unguarded_fraction: unguarded / (captures as f64 * cells),
    };
    let corpus = Corpus { population: pop, legit: data, rogue, views, summary };
    corpus.check_split_hygiene()?;
    Ok(corpus)
}
