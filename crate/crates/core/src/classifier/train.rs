use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Learning-rate multiplier for the freshly initialized output layer.
    pub new_layer_lr_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Stop once the epoch loss improves by less than `min_delta` for
    /// `patience` consecutive epochs. `patience = 0` disables it.
    pub min_delta: f64,
    pub patience: usize,
    pub seed: u64,
}

impl TrainHyper {
    pub fn scratch(seed: u64) -> Self {
        TrainHyper {
            learning_rate: 0.005,
            batch_size: 32,
            epochs: 30,
            new_layer_lr_factor: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            min_delta: 1e-4,
            patience: 3,
            seed,
        }
    }

    pub fn transfer(seed: u64) -> Self {
        TrainHyper {
            learning_rate: 0.0001,
            epochs: 15,
            new_layer_lr_factor: 20.0,
            ..Self::scratch(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.new_layer_lr_factor > 0.0) {
            return Err(Error::Config("new-layer learning-rate factor must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("invalid Adam moments".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

pub fn write_log_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut out = String::from("epoch,loss,train_accuracy\n");
    for e in log {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.accuracy));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Adam with a per-tensor learning rate.
pub struct Adam {
    lrs: Vec<f32>,
    beta1: f32,
    beta2: f32,
    eps: f32,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(net: &Network<f32>, hyper: &TrainHyper, head_factor: f64) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        let lrs = net
            .head_mask()
            .iter()
            .map(|&h| (hyper.learning_rate * if h { head_factor } else { 1.0 }) as f32)
            .collect();
        Adam {
            lrs,
            beta1: hyper.beta1 as f32,
            beta2: hyper.beta2 as f32,
            eps: hyper.adam_eps as f32,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Learning rate applied to each parameter tensor.
    pub fn learning_rates(&self) -> &[f32] {
        &self.lrs
    }

    pub fn update(&mut self, net: &mut Network<f32>, grads: &[Vec<f32>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, p) in net.params_mut().into_iter().enumerate() {
            let lr = self.lrs[k];
            if lr == 0.0 {
                continue;
            }
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Mini-batch training on `inputs` (`labels.len()` images laid end to end).
pub(crate) fn fit(
    net: &mut Network<f32>,
    inputs: &[f32],
    labels: &[usize],
    hyper: &TrainHyper,
    head_factor: f64,
) -> Result<Vec<EpochLog>> {
    hyper.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::Input("training set is empty".into()));
    }
    let len = inputs.len() / n;
    let mut adam = Adam::new(net, hyper, head_factor);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::new();
    let mut stalled = 0;
    let c = net.arch.num_classes;
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut seed::rng(seed::derive(hyper.seed, &[epoch as u64])));
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch in order.chunks(hyper.batch_size) {
            let mut x = Vec::with_capacity(batch.len() * len);
            let mut y = Vec::with_capacity(batch.len());
            for &i in batch {
                x.extend_from_slice(&inputs[i * len..(i + 1) * len]);
                y.push(labels[i]);
            }
            let tape = net.forward_train(&x)?;
            let (loss, dlogits) = super::layers::cross_entropy(&tape.logits, &y, c);
            for (row, &t) in tape.logits.chunks_exact(c).zip(&y) {
                let arg = row
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, &v)| if v > row[b] { i } else { b });
                correct += (arg == t) as usize;
            }
            let grads = net.backward(&tape, &dlogits);
            net.absorb_tape(&tape);
            adam.update(net, &grads);
            loss_sum += loss as f64 * batch.len() as f64;
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
        };
        if let Some(prev) = log.last().map(|e: &EpochLog| e.loss) {
            if prev - entry.loss < hyper.min_delta {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        log.push(entry);
        if hyper.patience > 0 && stalled >= hyper.patience {
            break;
        }
    }
    Ok(log)
}
