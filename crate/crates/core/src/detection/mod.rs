//! Posterior-difference matrices and one-class detection of contaminated
//! enrollments.

mod ocsvm;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ocsvm::{rbf, OneClassSvm};

use crate::classifier::{split_header, ArchSpec, PosteriorMatrix, TrainHyper, TrainedModel, TrainingSet};
use crate::feature::{rasterize, ClipRange, FeatureImage, FeatureKind};
use crate::grid::Grid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffLabel {
    Normal,
    Anomaly,
}

impl DiffLabel {
    pub fn name(self) -> &'static str {
        match self {
            DiffLabel::Normal => "normal",
            DiffLabel::Anomaly => "anomaly",
        }
    }
}

/// Where a difference matrix came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiffMeta {
    pub scenario: String,
    /// Classifier pair that produced the matrix; matrices sharing a batch
    /// come from the same pair of trained models.
    pub batch: u32,
}

/// Max-abs normalized `transfer - deep` posterior difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffMatrix {
    pub values: Grid<f64>,
    pub row_observations: Vec<String>,
    pub col_classes: Vec<String>,
    pub meta: DiffMeta,
    pub label: Option<DiffLabel>,
}

pub fn posterior_difference(m_transfer: &PosteriorMatrix, m_deep: &PosteriorMatrix) -> Result<DiffMatrix> {
    if m_transfer.probs.shape() != m_deep.probs.shape()
        || m_transfer.row_observations != m_deep.row_observations
        || m_transfer.col_classes != m_deep.col_classes
    {
        return Err(Error::Input("posterior matrices differ in shape or ordering".into()));
    }
    let raw = m_transfer.probs.zip_map(&m_deep.probs, |a, b| a - b);
    let peak = raw.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let values = if peak > 0.0 { raw.map(|v| v / peak) } else { raw };
    Ok(DiffMatrix {
        values,
        row_observations: m_transfer.row_observations.clone(),
        col_classes: m_transfer.col_classes.clone(),
        meta: DiffMeta::default(),
        label: None,
    })
}

/// Mean of `d[o, c]` over the rows whose true label is class `c`, per
/// column; `None` for classes without observations.
pub fn true_positive_margin(d: &DiffMatrix, true_labels: &[&str]) -> Result<Vec<Option<f64>>> {
    if true_labels.len() != d.values.rows() {
        return Err(Error::Input(format!(
            "{} labels for {} rows",
            true_labels.len(),
            d.values.rows()
        )));
    }
    Ok(d.col_classes
        .iter()
        .enumerate()
        .map(|(c, class)| {
            let vals: Vec<f64> = true_labels
                .iter()
                .enumerate()
                .filter(|(_, l)| **l == class)
                .map(|(o, _)| d.values[(o, c)])
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect())
}

/// Square image of a difference matrix, `[-1, 1]` mapped onto the pixel range.
pub fn diff_image(d: &DiffMatrix, size: usize) -> Result<FeatureImage> {
    rasterize(&d.values, ClipRange { lo: -1.0, hi: 1.0 }, size, 8, FeatureKind::Diff)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub image_size: usize,
    pub embed_dim: usize,
    pub min_normals: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub nu: f64,
    /// RBF width; `None` means `1 / embed_dim`.
    pub gamma: Option<f64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            image_size: 64,
            embed_dim: 64,
            min_normals: 50,
            epochs: 10,
            learning_rate: 0.005,
            nu: 0.1,
            gamma: None,
        }
    }
}

impl DetectorConfig {
    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(1.0 / self.embed_dim as f64)
    }
}

/// Embedding network trained on a proxy task over normal matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractor {
    pub model: TrainedModel,
}

fn stack_images(images: &[FeatureImage]) -> Vec<f32> {
    images.iter().flat_map(|i| i.normalized()).collect()
}

impl Extractor {
    pub fn image_size(&self) -> usize {
        self.model.arch().input_size
    }

    pub fn embed(&self, matrices: &[DiffMatrix]) -> Result<Vec<Vec<f64>>> {
        let images = crate::par::try_map(matrices, |d| diff_image(d, self.image_size()))?;
        Ok(self
            .model
            .embed(&stack_images(&images))?
            .into_iter()
            .map(|e| e.into_iter().map(f64::from).collect())
            .collect())
    }
}

/// Train the embedder to tell apart the batches (classifier pairs) that
/// generated the normal matrices, then keep everything below the head.
pub fn train_extractor(normals: &[DiffMatrix], cfg: &DetectorConfig, seed: u64) -> Result<Extractor> {
    if normals.len() < cfg.min_normals {
        return Err(Error::Input(format!(
            "{} normal matrices, need at least {}",
            normals.len(),
            cfg.min_normals
        )));
    }
    if normals.iter().any(|d| d.label == Some(DiffLabel::Anomaly)) {
        return Err(Error::Input("extractor training data contains anomalies".into()));
    }
    let mut batches: Vec<u32> = normals.iter().map(|d| d.meta.batch).collect();
    batches.sort_unstable();
    batches.dedup();
    let classes: Vec<String> = if batches.len() >= 2 {
        batches.iter().map(|b| format!("batch-{b}")).collect()
    } else {
        return Err(Error::Input("proxy task needs normals from at least two batches".into()));
    };
    let images = crate::par::try_map(normals, |d| diff_image(d, cfg.image_size))?;
    let labels: Vec<String> = normals.iter().map(|d| format!("batch-{}", d.meta.batch)).collect();
    let set = TrainingSet::new(images.iter().zip(labels.iter().map(String::as_str)), &classes)?;
    let arch = ArchSpec::embedder(cfg.image_size, cfg.embed_dim, classes.len());
    let model = TrainedModel::build(&arch, classes, seed)?;
    let hyper = TrainHyper {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        ..TrainHyper::scratch(seed)
    };
    let (model, _) = model.train_scratch(&set, &hyper)?;
    Ok(Extractor { model })
}

/// Per-dimension standardization fitted on the training embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len() as f64;
        let dim = points.first().map_or(0, Vec::len);
        let mean: Vec<f64> = (0..dim).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n).collect();
        let std: Vec<f64> = (0..dim)
            .map(|k| (points.iter().map(|p| (p[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        if std.iter().all(|&s| s == 0.0) {
            return Err(Error::Fit("embeddings are all identical".into()));
        }
        let std = std.into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        Ok(Scaler { mean, std })
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneClassDetector {
    pub extractor: Extractor,
    pub scaler: Scaler,
    pub svm: OneClassSvm,
    /// Scores below this are anomalies.
    pub threshold: f64,
}

/// Fit the one-class boundary on normal embeddings.
pub fn fit_boundary(extractor: Extractor, embeddings: &[Vec<f64>], nu: f64, gamma: f64) -> Result<OneClassDetector> {
    if embeddings.len() < 2 {
        return Err(Error::Fit("need at least two embeddings".into()));
    }
    let scaler = Scaler::fit(embeddings)?;
    let z: Vec<Vec<f64>> = embeddings.iter().map(|e| scaler.apply(e)).collect();
    let svm = OneClassSvm::fit(&z, nu, gamma)?;
    Ok(OneClassDetector {
        extractor,
        scaler,
        svm,
        threshold: 0.0,
    })
}

/// Extractor training plus boundary fit on the same normals.
pub fn train_detector(normals: &[DiffMatrix], cfg: &DetectorConfig, seed: u64) -> Result<OneClassDetector> {
    let extractor = train_extractor(normals, cfg, seed)?;
    let emb = extractor.embed(normals)?;
    fit_boundary(extractor, &emb, cfg.nu, cfg.gamma())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub flag: DiffLabel,
    pub score: f64,
}

impl OneClassDetector {
    pub fn score_embedding(&self, e: &[f64]) -> f64 {
        self.svm.decision(&self.scaler.apply(e))
    }

    fn classify(&self, score: f64) -> Detection {
        Detection {
            flag: if score < self.threshold { DiffLabel::Anomaly } else { DiffLabel::Normal },
            score,
        }
    }

    pub fn detect(&self, d: &DiffMatrix) -> Result<Detection> {
        Ok(self.detect_all(std::slice::from_ref(d))?[0])
    }

    pub fn detect_all(&self, ds: &[DiffMatrix]) -> Result<Vec<Detection>> {
        Ok(self
            .extractor
            .embed(ds)?
            .iter()
            .map(|e| self.classify(self.score_embedding(e)))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let model_bytes = self.extractor.model.to_bytes()?;
        let header = DetectorHeader {
            scaler: self.scaler.clone(),
            svm: self.svm.clone(),
            threshold: self.threshold,
            extractor_bytes: model_bytes.len(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut bytes = Vec::with_capacity(8 + json.len() + model_bytes.len());
        bytes.extend((json.len() as u64).to_le_bytes());
        bytes.extend(json);
        bytes.extend(model_bytes);
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let (header, blob): (DetectorHeader, &[u8]) = split_header(&bytes)?;
        if blob.len() != header.extractor_bytes {
            return Err(Error::Format("detector blob length mismatch".into()));
        }
        let model = TrainedModel::from_bytes(blob)?;
        if header.scaler.mean.len() != model.net.fc.inputs || header.scaler.std.len() != model.net.fc.inputs {
            return Err(Error::Format("scaler width does not match the extractor".into()));
        }
        Ok(OneClassDetector {
            extractor: Extractor { model },
            scaler: header.scaler,
            svm: header.svm,
            threshold: header.threshold,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DetectorHeader {
    scaler: Scaler,
    svm: OneClassSvm,
    threshold: f64,
    /// Length of the embedded extractor model file that follows the header.
    extractor_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub embedding: Vec<f64>,
    pub label: Option<DiffLabel>,
    pub scenario: String,
    pub score: f64,
}

pub fn export_embeddings(matrices: &[DiffMatrix], det: &OneClassDetector) -> Result<Vec<EmbeddingRow>> {
    let emb = det.extractor.embed(matrices)?;
    Ok(matrices
        .iter()
        .zip(emb)
        .map(|(d, e)| EmbeddingRow {
            score: det.score_embedding(&e),
            embedding: e,
            label: d.label,
            scenario: d.meta.scenario.clone(),
        })
        .collect())
}

/// `scenario,label,score,e0,e1,...`; an unknown label is written empty.
pub fn embeddings_csv(rows: &[EmbeddingRow]) -> String {
    let dim = rows.first().map_or(0, |r| r.embedding.len());
    let mut out = String::from("scenario,label,score");
    for k in 0..dim {
        out.push_str(&format!(",e{k}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}", r.scenario, r.label.map_or("", DiffLabel::name), r.score));
        for v in &r.embedding {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_embeddings_csv(text: &str) -> Result<Vec<EmbeddingRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(Error::Format(format!("line {}: too few fields", n + 1)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", n + 1)));
        let label = match fields[1] {
            "" => None,
            "normal" => Some(DiffLabel::Normal),
            "anomaly" => Some(DiffLabel::Anomaly),
            other => return Err(Error::Format(format!("line {}: unknown label {other}", n + 1))),
        };
        rows.push(EmbeddingRow {
            scenario: fields[0].to_string(),
            label,
            score: num(fields[2])?,
            embedding: fields[3..].iter().map(|f| num(f)).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}
