use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gradcheck::{gradient_check, GradientReport};
use super::layers::softmax_rows;
use super::network::{ArchSpec, Network};
use super::posterior::PosteriorMatrix;
use super::train::{fit, EpochLog, TrainHyper};
use crate::feature::FeatureImage;
use crate::grid::Grid;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Untrained,
    Scratch,
    Transfer { base_id: String },
}

/// Images flattened to `[0, 1]` floats with class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub size: usize,
    pub inputs: Vec<f32>,
    pub labels: Vec<usize>,
}

impl TrainingSet {
    /// Pair each image with the index of its label in `classes`.
    pub fn new<'a>(
        images: impl IntoIterator<Item = (&'a FeatureImage, &'a str)>,
        classes: &[String],
    ) -> Result<Self> {
        let mut size = None;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (img, label) in images {
            if *size.get_or_insert(img.size) != img.size {
                return Err(Error::Input("training images differ in size".into()));
            }
            let idx = classes
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| Error::Input(format!("label {label} is not a model class")))?;
            inputs.extend(img.normalized());
            labels.push(idx);
        }
        Ok(TrainingSet {
            size: size.unwrap_or(0),
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A network together with its class labels and training history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub net: Network<f32>,
    pub class_labels: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchSpec,
    class_labels: Vec<String>,
    provenance: Provenance,
    /// Element count of every stored tensor: parameters, then batch-norm
    /// running statistics.
    tensors: Vec<usize>,
}

const INFER_BATCH: usize = 64;

impl TrainedModel {
    pub fn build(arch: &ArchSpec, class_labels: Vec<String>, seed_value: u64) -> Result<Self> {
        if class_labels.len() != arch.num_classes {
            return Err(Error::Config(format!(
                "{} class labels for {} outputs",
                class_labels.len(),
                arch.num_classes
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = class_labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::Config(format!("duplicate class label {dup}")));
        }
        Ok(TrainedModel {
            net: Network::build(arch, seed_value)?,
            class_labels,
            provenance: Provenance::Untrained,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.net.arch
    }

    /// Stable fingerprint of the weights, used to reference base models.
    pub fn id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.net.params().into_iter().chain(self.net.buffers()) {
            for v in t {
                for b in v.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        format!("{h:016x}")
    }

    fn check_size(&self, size: usize) -> Result<()> {
        if size != self.arch().input_size {
            return Err(Error::Input(format!(
                "image size {size} does not match model input {}",
                self.arch().input_size
            )));
        }
        Ok(())
    }

    /// Inference-mode posteriors for flattened inputs.
    pub fn posteriors(&self, inputs: &[f32], row_ids: Vec<String>) -> Result<PosteriorMatrix> {
        let len = self.arch().input_size.pow(2);
        let c = self.class_labels.len();
        if inputs.len() != row_ids.len() * len {
            return Err(Error::Input("input length does not match row count".into()));
        }
        let mut probs = Vec::with_capacity(row_ids.len() * c);
        for chunk in inputs.chunks(INFER_BATCH * len) {
            let logits: Vec<f64> = self.net.logits(chunk)?.into_iter().map(f64::from).collect();
            probs.extend(softmax_rows(&logits, c));
        }
        PosteriorMatrix::new(Grid::from_vec(row_ids.len(), c, probs), row_ids, self.class_labels.clone())
    }

    pub fn forward(&self, images: &[&FeatureImage]) -> Result<PosteriorMatrix> {
        let mut inputs = Vec::new();
        for img in images {
            self.check_size(img.size)?;
            inputs.extend(img.normalized());
        }
        let ids = (0..images.len()).map(|i| i.to_string()).collect();
        self.posteriors(&inputs, ids)
    }

    /// Inference-mode vectors entering the output layer.
    pub fn embed(&self, inputs: &[f32]) -> Result<Vec<Vec<f32>>> {
        let len = self.arch().input_size.pow(2);
        let d = self.net.fc.inputs;
        let mut out = Vec::new();
        for chunk in inputs.chunks(INFER_BATCH * len) {
            out.extend(self.net.features(chunk)?.chunks_exact(d).map(<[f32]>::to_vec));
        }
        Ok(out)
    }

    fn check_set(&self, set: &TrainingSet) -> Result<()> {
        if set.is_empty() {
            return Err(Error::Input("training set is empty".into()));
        }
        self.check_size(set.size)?;
        if set.labels.iter().any(|&l| l >= self.class_labels.len()) {
            return Err(Error::Input("training label outside model classes".into()));
        }
        Ok(())
    }

    /// Train every layer from the current weights.
    pub fn train_scratch(mut self, set: &TrainingSet, hyper: &TrainHyper) -> Result<(Self, Vec<EpochLog>)> {
        self.check_set(set)?;
        let log = fit(&mut self.net, &set.inputs, &set.labels, hyper, 1.0)?;
        self.provenance = Provenance::Scratch;
        Ok((self, log))
    }

    /// Copy the base network's conv and batch-norm layers, re-initialize the
    /// output layer from `hyper.seed`, and fine-tune with the output layer's
    /// learning rate multiplied by `hyper.new_layer_lr_factor`.
    pub fn transfer(base: &TrainedModel, set: &TrainingSet, hyper: &TrainHyper) -> Result<(Self, Vec<EpochLog>)> {
        let mut model = Self::transfer_init(base, hyper.seed)?;
        model.check_set(set)?;
        let log = fit(&mut model.net, &set.inputs, &set.labels, hyper, hyper.new_layer_lr_factor)?;
        Ok((model, log))
    }

    /// Transfer setup without any fine-tuning step.
    pub fn transfer_init(base: &TrainedModel, seed_value: u64) -> Result<Self> {
        if base.provenance == Provenance::Untrained {
            return Err(Error::Input("transfer base has not been trained".into()));
        }
        let mut net = base.net.clone();
        net.reset_head(seed::derive(seed_value, &[0x4845_4144]))?;
        Ok(TrainedModel {
            net,
            class_labels: base.class_labels.clone(),
            provenance: Provenance::Transfer { base_id: base.id() },
        })
    }

    /// Double-precision gradient check on a single labelled input.
    pub fn gradient_check(&self, sample: &[f32], label: usize) -> Result<GradientReport> {
        let net = self.net.cast::<f64>();
        let x: Vec<f64> = sample.iter().map(|&v| v as f64).collect();
        gradient_check(&net, &x, &[label])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    }

    /// `u64` LE header length, JSON header, then every tensor as LE `f32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self.net.params();
        let buffers = self.net.buffers();
        let header = Header {
            arch: self.arch().clone(),
            class_labels: self.class_labels.clone(),
            provenance: self.provenance.clone(),
            tensors: params.iter().chain(&buffers).map(|t| t.len()).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut bytes = Vec::with_capacity(8 + json.len());
        bytes.extend((json.len() as u64).to_le_bytes());
        bytes.extend(json);
        for t in params.iter().chain(&buffers) {
            for v in t.iter() {
                bytes.extend(v.to_le_bytes());
            }
        }
        Ok(bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, blob): (Header, &[u8]) = split_header(bytes)?;
        let mut model = Self::build(&header.arch, header.class_labels, 0)
            .map_err(|e| Error::Format(format!("model header: {e}")))?;
        let expected: Vec<usize> = model
            .net
            .params()
            .iter()
            .chain(&model.net.buffers())
            .map(|t| t.len())
            .collect();
        if header.tensors != expected {
            return Err(Error::Format("tensor shapes disagree with the architecture".into()));
        }
        let values = decode_f32(blob, expected.iter().sum())?;
        let mut at = 0;
        for t in model.net.params_mut() {
            let n = t.len();
            t.copy_from_slice(&values[at..at + n]);
            at += n;
        }
        for t in model.net.buffers_mut() {
            let n = t.len();
            t.copy_from_slice(&values[at..at + n]);
            at += n;
        }
        model.provenance = header.provenance;
        Ok(model)
    }
}

/// Parse the `u64` length prefix and JSON header of a header+blob file.
pub(crate) fn split_header<H: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<(H, &[u8])> {
    if bytes.len() < 8 {
        return Err(Error::Format("file too short for a header".into()));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if n > bytes.len() - 8 {
        return Err(Error::Format("header length exceeds file size".into()));
    }
    let header = serde_json::from_slice(&bytes[8..8 + n])
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    Ok((header, &bytes[8 + n..]))
}

pub(crate) fn decode_f32(blob: &[u8], count: usize) -> Result<Vec<f32>> {
    if blob.len() != count * 4 {
        return Err(Error::Format(format!(
            "blob holds {} bytes, expected {}",
            blob.len(),
            count * 4
        )));
    }
    Ok(blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
