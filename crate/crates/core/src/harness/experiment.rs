//! Scenario runners over a shared corpus.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::{build_corpus, Corpus, DeviceData, Pool, Sample, View};
use super::metrics::{auc, micro_average_roc, posterior_accuracy, roc};
use crate::attacks::{
    contaminate_enrollment, impersonation_testset, AttackKind, AttackScenario, LabeledFeatureSet,
    LabeledItem, Split,
};
use crate::classifier::{ArchSpec, PosteriorMatrix, TrainHyper, TrainedModel, TrainingSet};
use crate::detection::{
    export_embeddings, posterior_difference, train_detector, EmbeddingRow, true_positive_margin, DiffLabel, DiffMatrix, DiffMeta,
    OneClassDetector,
};
use crate::feature::{FeatureImage, FeatureKind};
use crate::{seed, Error, Result};

const TAG_BASE: u64 = 0xBA5E;
const TAG_SCRATCH: u64 = 0x5C;
const TAG_TRANSFER: u64 = 0x7F;
const TAG_PAIR: u64 = 0x9A1;
const TAG_DETECTOR: u64 = 0xDE7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Scratch,
    Transfer,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Scratch => "scratch",
            Mode::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseRow {
    pub feature: FeatureKind,
    pub chamber_accuracy: f64,
    /// Base model applied to deployment captures without enrollment.
    pub env_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub feature: FeatureKind,
    pub mode: Mode,
    pub samples: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub base: Vec<BaseRow>,
    pub rows: Vec<AccuracyRow>,
}

impl ClassificationResult {
    pub fn accuracy(&self, feature: FeatureKind, mode: Mode, samples: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.feature == feature && r.mode == mode && r.samples == samples)
            .map(|r| r.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpersonationRow {
    pub feature: FeatureKind,
    pub mode: Mode,
    pub samples: usize,
    /// Legitimate and rogue test captures pooled, all (observation, class)
    /// pairs flattened.
    pub micro_auc: f64,
    /// Mean of `per_target`.
    pub target_auc: f64,
    /// Genuine-vs-rogue AUC on each target's own score, in class order.
    pub per_target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpersonationResult {
    pub rows: Vec<ImpersonationRow>,
}

impl ImpersonationResult {
    pub fn row(&self, feature: FeatureKind, mode: Mode) -> Option<&ImpersonationRow> {
        self.rows.iter().find(|r| r.feature == feature && r.mode == mode)
    }
}

/// One contaminated enrollment draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackDraw {
    pub samples: usize,
    pub pair: usize,
    pub target: String,
    pub rogue: String,
    /// Contaminated transfer model, target's score on genuine target versus
    /// rogue test captures.
    pub transfer_auc: f64,
    pub scratch_auc: f64,
    /// True-positive margin of the target on the full query set.
    pub target_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMargins {
    pub samples: usize,
    pub pair: usize,
    pub margins: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub samples: usize,
    pub normals: usize,
    pub heldout: usize,
    pub attacks: usize,
    /// `None` when there were no matrices of that kind.
    pub detection_rate: Option<f64>,
    pub false_alarm_rate: Option<f64>,
    /// Training normals flagged by the fitted boundary.
    pub training_outliers: f64,
    /// Mean normal-to-attack embedding distance over mean normal-to-normal.
    pub separation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationResult {
    pub draws: Vec<AttackDraw>,
    pub normal_margins: Vec<NormalMargins>,
    pub detection: Vec<DetectionRow>,
}

impl ContaminationResult {
    pub fn detection_at(&self, samples: usize) -> Option<&DetectionRow> {
        self.detection.iter().find(|r| r.samples == samples)
    }
}

/// Per-view base models and the corpus they were trained on.
pub struct Lab<'a> {
    pub cfg: &'a ExperimentConfig,
    pub corpus: Corpus,
    classes: Vec<String>,
    bases: BTreeMap<View, TrainedModel>,
    enrolled: BTreeMap<(FeatureKind, Mode), TrainedModel>,
    /// Detector and embedding table per enrollment size, from the last
    /// contamination run.
    pub detectors: BTreeMap<usize, OneClassDetector>,
    pub embeddings: BTreeMap<usize, Vec<EmbeddingRow>>,
}

fn hyper(h: &TrainHyper, seed_value: u64) -> TrainHyper {
    TrainHyper { seed: seed_value, ..h.clone() }
}

fn row_id(dev: &str, slot: usize) -> String {
    format!("{dev}#{slot:04}")
}

fn select(p: &PosteriorMatrix, rows: &[usize]) -> Result<PosteriorMatrix> {
    PosteriorMatrix::new(
        p.probs.select_rows(rows),
        rows.iter().map(|&r| p.row_observations[r].clone()).collect(),
        p.col_classes.clone(),
    )
}

fn genuine_set<'s>(devs: &'s [DeviceData], pool: Pool, view: View, split: Split) -> LabeledFeatureSet<&'s FeatureImage> {
    let items = devs
        .iter()
        .flat_map(|d| d.pool(pool).iter().map(move |s| LabeledItem::genuine(s.image(view), d.id.clone())))
        .collect();
    LabeledFeatureSet::new(items, split)
}

/// Images of `pool` across `devs`, with row ids and true labels.
fn test_images<'d>(
    devs: impl IntoIterator<Item = &'d DeviceData>,
    pool: Pool,
    view: View,
) -> (Vec<&'d FeatureImage>, Vec<String>, Vec<&'d str>) {
    let mut imgs = Vec::new();
    let mut ids = Vec::new();
    let mut truth = Vec::new();
    for d in devs {
        for (slot, s) in d.pool(pool).iter().enumerate() {
            imgs.push(s.image(view));
            ids.push(row_id(&d.id, slot));
            truth.push(d.id.as_str());
        }
    }
    (imgs, ids, truth)
}

impl<'a> Lab<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let corpus = build_corpus(cfg)?;
        log::info!(
            "corpus: {} captures, {} filter rejections",
            corpus.summary.captures,
            corpus.summary.rejected
        );
        let classes = corpus.population.legit_ids();
        Ok(Lab {
            cfg,
            corpus,
            classes,
            bases: BTreeMap::new(),
            enrolled: BTreeMap::new(),
            detectors: BTreeMap::new(),
            embeddings: BTreeMap::new(),
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    fn training_set(&self, items: &[(&FeatureImage, &str)]) -> Result<TrainingSet> {
        TrainingSet::new(items.iter().copied(), &self.classes)
    }

    /// Legitimate enrollment: the first `n` deployment captures per device.
    fn enrollment(&self, view: View, n: usize) -> Vec<(&FeatureImage, &str)> {
        self.corpus
            .legit
            .iter()
            .flat_map(|d| d.pool(Pool::EnvTrain)[..n].iter().map(move |s| (s.image(view), d.id.as_str())))
            .collect()
    }

    fn posteriors(&self, model: &TrainedModel, imgs: &[&FeatureImage], ids: Vec<String>) -> Result<PosteriorMatrix> {
        let inputs: Vec<f32> = imgs.iter().flat_map(|i| i.normalized()).collect();
        model.posteriors(&inputs, ids)
    }

    fn arch(&self, size: usize) -> ArchSpec {
        ArchSpec::standard(size, self.classes.len())
    }

    /// Chamber-trained model for `view`, trained on first use.
    pub fn base(&mut self, view: View) -> Result<&TrainedModel> {
        if !self.bases.contains_key(&view) {
            let items: Vec<(&FeatureImage, &str)> = self
                .corpus
                .legit
                .iter()
                .flat_map(|d| d.pool(Pool::ChamberTrain).iter().map(move |s| (s.image(view), d.id.as_str())))
                .collect();
            let set = self.training_set(&items)?;
            let s = seed::derive(self.cfg.seed, &[TAG_BASE, view.kind as u64, view.size as u64]);
            let model = TrainedModel::build(&self.arch(view.size), self.classes.clone(), s)?;
            let (model, log) = model.train_scratch(&set, &hyper(&self.cfg.training.scratch, s))?;
            log::info!("base {:?}/{}: {} epochs", view.kind, view.size, log.len());
            self.bases.insert(view, model);
        }
        Ok(&self.bases[&view])
    }

    /// Scratch and transfer models on one enrollment; the base for `view`
    /// must already be trained.
    fn train_pair(&self, view: View, set: &TrainingSet, tags: &[u64]) -> Result<(TrainedModel, TrainedModel)> {
        let s_scratch = seed::derive(self.cfg.seed, &[&[TAG_SCRATCH], tags].concat());
        let s_transfer = seed::derive(self.cfg.seed, &[&[TAG_TRANSFER], tags].concat());
        let fresh = TrainedModel::build(&self.arch(view.size), self.classes.clone(), s_scratch)?;
        let (scratch, _) = fresh.train_scratch(set, &hyper(&self.cfg.training.scratch, s_scratch))?;
        let transfer_h = hyper(&self.cfg.training.transfer, s_transfer);
        let (transfer, _) = TrainedModel::transfer(&self.bases[&view], set, &transfer_h)?;
        Ok((scratch, transfer))
    }

    pub fn run_classification(&mut self) -> Result<ClassificationResult> {
        let c = self.cfg.classification.clone();
        let size = self.cfg.feature.image_size;
        let mut base_rows = Vec::new();
        let mut rows = Vec::new();
        let mut enrolled = Vec::new();
        for &kind in &c.features {
            let view = View { kind, size };
            self.base(view)?;
            let legit = &self.corpus.legit;
            let (chamber, chamber_ids, chamber_truth) = test_images(legit, Pool::ChamberTest, view);
            let (env, env_ids, env_truth) = test_images(legit, Pool::EnvTest, view);
            let base = &self.bases[&view];
            let chamber_accuracy = posterior_accuracy(&self.posteriors(base, &chamber, chamber_ids)?, &chamber_truth)?;
            let env_accuracy = posterior_accuracy(&self.posteriors(base, &env, env_ids.clone())?, &env_truth)?;
            base_rows.push(BaseRow { feature: kind, chamber_accuracy, env_accuracy });
            for &n in &c.train_samples {
                let items = self.enrollment(view, n);
                let set = self.training_set(&items)?;
                let (scratch, transfer) = self.train_pair(view, &set, &[kind as u64, n as u64])?;
                for (mode, model) in [(Mode::Scratch, &scratch), (Mode::Transfer, &transfer)] {
                    let p = self.posteriors(model, &env, env_ids.clone())?;
                    let acc = posterior_accuracy(&p, &env_truth)?;
                    log::info!("classification {}/{} n={n}: {acc:.3}", kind.name(), mode.name());
                    rows.push(AccuracyRow { feature: kind, mode, samples: n, accuracy: acc });
                }
                if n == c.impersonation_samples {
                    enrolled.push(((kind, Mode::Scratch), scratch));
                    enrolled.push(((kind, Mode::Transfer), transfer));
                }
            }
        }
        self.enrolled.extend(enrolled);
        Ok(ClassificationResult { base: base_rows, rows })
    }

    /// Uses the models enrolled by [`Lab::run_classification`], running it
    /// first if needed.
    pub fn run_impersonation(&mut self) -> Result<ImpersonationResult> {
        if self.cfg.population.rogue == 0 {
            return Err(Error::Config("impersonation needs rogue devices".into()));
        }
        if self.enrolled.is_empty() {
            self.run_classification()?;
        }
        let size = self.cfg.feature.image_size;
        let mut rows = Vec::new();
        for (&(kind, mode), model) in &self.enrolled {
            let view = View { kind, size };
            let all = self.corpus.legit.iter().chain(&self.corpus.rogue);
            let (imgs, ids, truth) = test_images(all, Pool::EnvTest, view);
            let p = self.posteriors(model, &imgs, ids)?;
            let micro_auc = auc(&micro_average_roc(&p, &truth)?);

            let legit_test = genuine_set(&self.corpus.legit, Pool::EnvTest, view, Split::Test);
            let rogue_test = genuine_set(&self.corpus.rogue, Pool::EnvTest, view, Split::Test);
            let mut target_aucs = Vec::new();
            for (t, target) in self.classes.iter().enumerate() {
                let sc = AttackScenario {
                    kind: AttackKind::Impersonation,
                    target: target.clone(),
                    rogue: self.corpus.rogue[0].id.clone(),
                    seed: 0,
                };
                let set = impersonation_testset(&legit_test, &rogue_test, &sc)?;
                let imgs: Vec<&FeatureImage> = set.items.iter().map(|i| i.feature).collect();
                let ids = (0..imgs.len()).map(|i| i.to_string()).collect();
                let p = self.posteriors(model, &imgs, ids)?;
                let scores: Vec<f64> = (0..p.observations()).map(|o| p.probs[(o, t)]).collect();
                let labels: Vec<bool> = set.items.iter().map(|i| i.is_genuine()).collect();
                target_aucs.push(auc(&roc(&scores, &labels)?));
            }
            let target_auc = target_aucs.iter().sum::<f64>() / target_aucs.len() as f64;
            log::info!("impersonation {}/{}: micro {micro_auc:.4} target {target_auc:.4}", kind.name(), mode.name());
            rows.push(ImpersonationRow {
                feature: kind,
                mode,
                samples: self.cfg.classification.impersonation_samples,
                micro_auc,
                target_auc,
                per_target: target_aucs,
            });
        }
        Ok(ImpersonationResult { rows })
    }

    pub fn run_contamination(&mut self) -> Result<ContaminationResult> {
        let k = self.cfg.contamination.clone();
        let view = View { kind: k.feature, size: k.image_size };
        self.base(view)?;
        let mut out = ContaminationResult { draws: Vec::new(), normal_margins: Vec::new(), detection: Vec::new() };
        for &n in &k.train_samples {
            let roles = [
                (Role::Normal, k.normal_pairs),
                (Role::Heldout, k.heldout_pairs),
                (Role::Attack, if self.corpus.rogue.is_empty() { 0 } else { k.attack_pairs }),
            ];
            let mut normals = Vec::new();
            let mut heldout = Vec::new();
            let mut attacks = Vec::new();
            for (role, count) in roles {
                for p in 0..count {
                    let run = self.pair_run(view, n, role, p)?;
                    if n == k.vulnerability_samples {
                        match &run.draw {
                            Some(d) => out.draws.push(d.clone()),
                            None if role == Role::Normal => out.normal_margins.push(NormalMargins {
                                samples: n,
                                pair: p,
                                margins: run.full_margins.clone(),
                            }),
                            None => {}
                        }
                    }
                    match role {
                        Role::Normal => normals.extend(run.matrices),
                        Role::Heldout => heldout.extend(run.matrices),
                        Role::Attack => attacks.extend(run.matrices),
                    }
                }
            }
            let det_seed = seed::derive(self.cfg.seed, &[TAG_DETECTOR, n as u64]);
            let det = train_detector(&normals, &k.detector, det_seed)?;
            let row = detection_row(&det, n, &normals, &heldout, &attacks)?;
            log::info!(
                "contamination n={n}: detection {:?} false alarms {:?}",
                row.detection_rate,
                row.false_alarm_rate
            );
            out.detection.push(row);
            let all: Vec<DiffMatrix> = normals.into_iter().chain(heldout).chain(attacks).collect();
            self.embeddings.insert(n, export_embeddings(&all, &det)?);
            self.detectors.insert(n, det);
        }
        Ok(out)
    }

    fn pair_run(&self, view: View, n: usize, role: Role, p: usize) -> Result<PairRun> {
        let cfg = self.cfg;
        let k = &cfg.contamination;
        let pool_len = self.cfg.train_pool();
        let mut rng = seed::rng(seed::derive(self.cfg.seed, &[TAG_PAIR, n as u64, role as u64, p as u64]));
        let mut items = Vec::new();
        for d in &self.corpus.legit {
            let mut pick = index::sample(&mut rng, pool_len, n).into_vec();
            pick.sort_unstable();
            let pool = d.pool(Pool::EnvTrain);
            items.extend(pick.into_iter().map(|i| LabeledItem::genuine(pool[i].image(view), d.id.clone())));
        }
        let mut train = LabeledFeatureSet::new(items, Split::Train);
        let mut scenario = None;
        if role == Role::Attack {
            let target = self.classes[rng.random_range(0..self.classes.len())].clone();
            let rogue = self.corpus.rogue[rng.random_range(0..self.corpus.rogue.len())].id.clone();
            let sc = AttackScenario { kind: AttackKind::Contamination, target, rogue, seed: rng.random() };
            let rogue_pool = genuine_set(&self.corpus.rogue, Pool::EnvTrain, view, Split::Train);
            train = contaminate_enrollment(&train, &rogue_pool, &sc)?;
            scenario = Some(sc);
        }
        let pairs: Vec<(&FeatureImage, &str)> = train.items.iter().map(|i| (i.feature, i.claimed.as_str())).collect();
        let set = self.training_set(&pairs)?;
        let (scratch, transfer) = self.train_pair(view, &set, &[TAG_PAIR, n as u64, role as u64, p as u64])?;

        // The receiver's held-out captures come from the same collection as
        // its enrollment, so under attack the target's rows are rogue
        // captures carrying the target's claimed identity.
        let sources = self.corpus.legit.iter().map(|d| match &scenario {
            Some(sc) if sc.target == d.id => self.corpus.device(&sc.rogue).expect("rogue exists"),
            _ => d,
        });
        let (imgs, ids, _) = test_images(sources, Pool::EnvTest, view);
        let per_dev = self.cfg.classification.test_samples;
        let claimed: Vec<&str> = self.classes.iter().flat_map(|c| std::iter::repeat_n(c.as_str(), per_dev)).collect();
        let pt = self.posteriors(&transfer, &imgs, ids.clone())?;
        let pd = self.posteriors(&scratch, &imgs, ids)?;
        let full = posterior_difference(&pt, &pd)?;
        let full_margins = true_positive_margin(&full, &claimed)?;

        let label = if role == Role::Attack { DiffLabel::Anomaly } else { DiffLabel::Normal };
        let mut matrices = Vec::new();
        for _ in 0..k.matrices_per_pair {
            let mut rows = Vec::new();
            for d in 0..self.classes.len() {
                let mut pick = index::sample(&mut rng, per_dev, k.query_samples).into_vec();
                pick.sort_unstable();
                rows.extend(pick.into_iter().map(|i| d * per_dev + i));
            }
            let mut m = posterior_difference(&select(&pt, &rows)?, &select(&pd, &rows)?)?;
            m.meta = DiffMeta { scenario: format!("n{n}/{}{p:02}", role.name()), batch: p as u32 };
            m.label = Some(label);
            matrices.push(m);
        }

        let draw = match scenario {
            Some(sc) => {
                let t = self.classes.iter().position(|c| *c == sc.target).expect("target is a class");
                let target = self.corpus.device(&sc.target).expect("target exists");
                let rogue = self.corpus.device(&sc.rogue).expect("rogue exists");
                let test: Vec<&Sample> = target.pool(Pool::EnvTest).iter().chain(rogue.pool(Pool::EnvTest)).collect();
                let labels: Vec<bool> = (0..test.len()).map(|i| i < target.pool(Pool::EnvTest).len()).collect();
                let imgs: Vec<&FeatureImage> = test.iter().map(|s| s.image(view)).collect();
                let ids: Vec<String> = (0..imgs.len()).map(|i| i.to_string()).collect();
                let score = |m: &TrainedModel| -> Result<f64> {
                    let p = self.posteriors(m, &imgs, ids.clone())?;
                    let s: Vec<f64> = (0..p.observations()).map(|o| p.probs[(o, t)]).collect();
                    Ok(auc(&roc(&s, &labels)?))
                };
                Some(AttackDraw {
                    samples: n,
                    pair: p,
                    transfer_auc: score(&transfer)?,
                    scratch_auc: score(&scratch)?,
                    target_margin: full_margins[t].ok_or_else(|| Error::Metric("target has no queries".into()))?,
                    target: sc.target,
                    rogue: sc.rogue,
                })
            }
            None => None,
        };
        Ok(PairRun { matrices, full_margins, draw })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Normal,
    Heldout,
    Attack,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Normal => "normal",
            Role::Heldout => "heldout",
            Role::Attack => "attack",
        }
    }
}

struct PairRun {
    matrices: Vec<DiffMatrix>,
    full_margins: Vec<Option<f64>>,
    draw: Option<AttackDraw>,
}

fn mean_distance(a: &[Vec<f64>], b: &[Vec<f64>], skip_self: bool) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if skip_self && i == j {
                continue;
            }
            sum += x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn detection_row(
    det: &OneClassDetector,
    samples: usize,
    normals: &[DiffMatrix],
    heldout: &[DiffMatrix],
    attacks: &[DiffMatrix],
) -> Result<DetectionRow> {
    let rate = |ms: &[DiffMatrix]| -> Result<Option<f64>> {
        if ms.is_empty() {
            return Ok(None);
        }
        let flags = det.detect_all(ms)?;
        Ok(Some(fraction(flags.iter().map(|d| d.flag == DiffLabel::Anomaly))))
    };
    let scaled = |ms: &[DiffMatrix]| -> Result<Vec<Vec<f64>>> {
        Ok(det.extractor.embed(ms)?.iter().map(|e| det.scaler.apply(e)).collect())
    };
    let en = scaled(normals)?;
    let ea = scaled(attacks)?;
    Ok(DetectionRow {
        samples,
        normals: normals.len(),
        heldout: heldout.len(),
        attacks: attacks.len(),
        detection_rate: rate(attacks)?,
        false_alarm_rate: rate(heldout)?,
        training_outliers: rate(normals)?.unwrap_or(0.0),
        separation: (!ea.is_empty()).then(|| mean_distance(&en, &ea, false) / mean_distance(&en, &en, true)),
    })
}

/// Fraction of true entries; NaN when empty.
pub fn fraction(values: impl IntoIterator<Item = bool>) -> f64 {
    let v: Vec<bool> = values.into_iter().collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().filter(|&&b| b).count() as f64 / v.len() as f64
}

impl Lab<'_> {
    /// Enrolled models, detectors and embedding tables under `dir`.
    pub fn write_artifacts(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (view, m) in &self.bases {
            m.save(&dir.join(format!("base-{}-{}.model", view.kind.name(), view.size)))?;
        }
        for ((kind, mode), m) in &self.enrolled {
            m.save(&dir.join(format!("{}-{}.model", kind.name(), mode.name())))?;
        }
        for (n, det) in &self.detectors {
            det.save(&dir.join(format!("detector-n{n}.bin")))?;
        }
        for (n, rows) in &self.embeddings {
            let p = dir.join(format!("embeddings-n{n}.csv"));
            std::fs::write(&p, crate::detection::embeddings_csv(rows)).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Classification, impersonation and contamination on one corpus.
pub fn run_all(cfg: &ExperimentConfig) -> Result<super::report::Report> {
    let mut lab = Lab::new(cfg)?;
    let classification = lab.run_classification()?;
    let impersonation = if cfg.population.rogue > 0 { Some(lab.run_impersonation()?) } else { None };
    let contamination = lab.run_contamination()?;
    Ok(super::report::Report::new(cfg, lab.corpus.summary.clone(), Some(classification), impersonation, Some(contamination)))
}
