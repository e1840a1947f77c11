use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::{
    cross_entropy, maxpool_backward, maxpool_forward, relu_inplace, BatchNorm, BnCache, Conv2d,
    Dense, KERNEL,
};
use super::real::Real;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub filters: usize,
    /// 2x2 max pool, stride 2, after the activation.
    pub pool: bool,
}

/// What sits between the last conv block and the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Flatten the final feature map.
    Flatten,
    /// Average each channel over space.
    GlobalAvgPool,
}

/// Network shape: conv -> batch norm -> ReLU (-> pool) blocks, then a fully
/// connected softmax output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_size: usize,
    pub blocks: Vec<BlockSpec>,
    pub head: Head,
    pub num_classes: usize,
}

impl ArchSpec {
    /// Three blocks of 8, 16 and 32 filters, pooling after the first two.
    pub fn standard(input_size: usize, num_classes: usize) -> Self {
        ArchSpec {
            input_size,
            blocks: vec![
                BlockSpec { filters: 8, pool: true },
                BlockSpec { filters: 16, pool: true },
                BlockSpec { filters: 32, pool: false },
            ],
            head: Head::Flatten,
            num_classes,
        }
    }

    /// Feature extractor for difference matrices: three blocks and global
    /// average pooling, so the embedding width is the last block's filters.
    pub fn embedder(input_size: usize, embed_dim: usize, num_classes: usize) -> Self {
        ArchSpec {
            input_size,
            blocks: vec![
                BlockSpec { filters: 16, pool: true },
                BlockSpec { filters: 32, pool: true },
                BlockSpec { filters: embed_dim, pool: false },
            ],
            head: Head::GlobalAvgPool,
            num_classes,
        }
    }

    /// `(channels, side)` of the tensor entering each block, plus the final one.
    pub fn shapes(&self) -> Result<Vec<(usize, usize)>> {
        let mut out = vec![(1, self.input_size)];
        let mut h = self.input_size;
        for (i, b) in self.blocks.iter().enumerate() {
            if h < KERNEL {
                return Err(Error::Config(format!(
                    "input size {} too small for block {}",
                    self.input_size,
                    i + 1
                )));
            }
            h = h + 1 - KERNEL;
            if b.pool {
                h /= 2;
            }
            if h == 0 {
                return Err(Error::Config(format!("block {} leaves an empty feature map", i + 1)));
            }
            out.push((b.filters, h));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::Config("input size must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.blocks.iter().any(|b| b.filters == 0) {
            return Err(Error::Config("blocks need at least one filter".into()));
        }
        self.shapes().map(|_| ())
    }

    /// Width of the vector entering the output layer.
    pub fn fc_inputs(&self) -> Result<usize> {
        let &(c, h) = self.shapes()?.last().expect("input shape present");
        Ok(match self.head {
            Head::Flatten => c * h * h,
            Head::GlobalAvgPool => c,
        })
    }

    /// Trainable parameter count per tensor, in [`Network::params`] order.
    pub fn param_counts(&self) -> Result<Vec<usize>> {
        let shapes = self.shapes()?;
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend([shapes[i].0 * b.filters * KERNEL * KERNEL, b.filters, b.filters, b.filters]);
        }
        let d = self.fc_inputs()?;
        out.extend([d * self.num_classes, self.num_classes]);
        Ok(out)
    }
}

/// Parameter tensors of a built network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub arch: ArchSpec,
    pub convs: Vec<Conv2d<T>>,
    pub norms: Vec<BatchNorm<T>>,
    pub fc: Dense<T>,
}

fn he_normal<T: Real, R: Rng>(rng: &mut R, len: usize, fan_in: usize, scale: f64) -> Vec<T> {
    let std = scale * (2.0 / fan_in as f64).sqrt();
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(std * z)
        })
        .collect()
}

/// Output-layer weights are He-normal scaled down by this factor so that a
/// fresh network starts close to uniform posteriors.
pub const FC_INIT_SCALE: f64 = 0.05;

pub(crate) struct BlockTape<T> {
    side: usize,
    cols: Vec<T>,
    bn: BnCache<T>,
    act: Vec<T>,
    pool_idx: Option<Vec<u32>>,
}

/// Intermediate values of a training-mode forward pass.
pub(crate) struct Tape<T> {
    n: usize,
    blocks: Vec<BlockTape<T>>,
    fc_in: Vec<T>,
    pub logits: Vec<T>,
}

/// Parameter gradients in [`Network::params`] order.
pub type Grads<T> = Vec<Vec<T>>;

impl<T: Real> Network<T> {
    pub fn build(arch: &ArchSpec, seed_value: u64) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.shapes()?;
        let mut rng = seed::rng(seed_value);
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (i, b) in arch.blocks.iter().enumerate() {
            let cin = shapes[i].0;
            let fan_in = cin * KERNEL * KERNEL;
            convs.push(Conv2d {
                in_ch: cin,
                out_ch: b.filters,
                weight: he_normal(&mut rng, b.filters * fan_in, fan_in, 1.0),
                bias: vec![T::zero(); b.filters],
            });
            norms.push(BatchNorm::new(b.filters));
        }
        let fc = Self::fresh_fc(arch, &mut rng)?;
        Ok(Network {
            arch: arch.clone(),
            convs,
            norms,
            fc,
        })
    }

    fn fresh_fc<R: Rng>(arch: &ArchSpec, rng: &mut R) -> Result<Dense<T>> {
        let d = arch.fc_inputs()?;
        Ok(Dense {
            inputs: d,
            outputs: arch.num_classes,
            weight: he_normal(rng, d * arch.num_classes, d, FC_INIT_SCALE),
            bias: vec![T::zero(); arch.num_classes],
        })
    }

    /// Replace the output layer with a freshly initialized one.
    pub fn reset_head(&mut self, seed_value: u64) -> Result<()> {
        self.fc = Self::fresh_fc(&self.arch, &mut seed::rng(seed_value))?;
        Ok(())
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for (c, b) in self.convs.iter().zip(&self.norms) {
            out.extend([&c.weight[..], &c.bias[..], &b.gamma[..], &b.beta[..]]);
        }
        out.extend([&self.fc.weight[..], &self.fc.bias[..]]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out: Vec<&mut Vec<T>> = Vec::new();
        for (c, b) in self.convs.iter_mut().zip(self.norms.iter_mut()) {
            out.extend([&mut c.weight, &mut c.bias, &mut b.gamma, &mut b.beta]);
        }
        out.extend([&mut self.fc.weight, &mut self.fc.bias]);
        out
    }

    /// Whether each tensor of [`Self::params`] belongs to the output layer.
    pub fn head_mask(&self) -> Vec<bool> {
        let mut out = vec![false; 4 * self.convs.len()];
        out.extend([true, true]);
        out
    }

    /// Batch-norm running statistics, `[mean, var]` per block.
    pub fn buffers(&self) -> Vec<&[T]> {
        self.norms
            .iter()
            .flat_map(|b| [&b.running_mean[..], &b.running_var[..]])
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.norms
            .iter_mut()
            .flat_map(|b| [&mut b.running_mean, &mut b.running_var])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Element-wise conversion to another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let conv = |v: &[T]| -> Vec<U> { v.iter().map(|x| U::from(*x).unwrap()).collect() };
        Network {
            arch: self.arch.clone(),
            convs: self
                .convs
                .iter()
                .map(|c| Conv2d {
                    in_ch: c.in_ch,
                    out_ch: c.out_ch,
                    weight: conv(&c.weight),
                    bias: conv(&c.bias),
                })
                .collect(),
            norms: self
                .norms
                .iter()
                .map(|b| BatchNorm {
                    gamma: conv(&b.gamma),
                    beta: conv(&b.beta),
                    running_mean: conv(&b.running_mean),
                    running_var: conv(&b.running_var),
                })
                .collect(),
            fc: Dense {
                inputs: self.fc.inputs,
                outputs: self.fc.outputs,
                weight: conv(&self.fc.weight),
                bias: conv(&self.fc.bias),
            },
        }
    }

    fn input_len(&self) -> usize {
        self.arch.input_size * self.arch.input_size
    }

    fn check_input(&self, x: &[T]) -> Result<usize> {
        let len = self.input_len();
        if x.is_empty() || x.len() % len != 0 {
            return Err(Error::Input(format!(
                "input of {} values is not a batch of {}x{} images",
                x.len(),
                self.arch.input_size,
                self.arch.input_size
            )));
        }
        Ok(x.len() / len)
    }

    fn head_input(&self, x: Vec<T>, n: usize) -> Vec<T> {
        match self.arch.head {
            Head::Flatten => x,
            Head::GlobalAvgPool => {
                let c = self.fc.inputs;
                let p = x.len() / (n * c);
                let inv = T::one() / T::from_usize(p).unwrap();
                x.chunks_exact(p).map(|s| s.iter().copied().sum::<T>() * inv).collect()
            }
        }
    }

    /// Inference-mode features entering the output layer, `[n][fc_inputs]`.
    pub fn features(&self, x: &[T]) -> Result<Vec<T>> {
        let n = self.check_input(x)?;
        let mut h = self.arch.input_size;
        let mut cur = x.to_vec();
        for ((conv, bn), spec) in self.convs.iter().zip(&self.norms).zip(&self.arch.blocks) {
            let (mut z, _) = conv.forward(&cur, n, h, h);
            h = h + 1 - KERNEL;
            bn.forward_eval(&mut z, h * h);
            relu_inplace(&mut z);
            cur = if spec.pool {
                let (y, _) = maxpool_forward(&z, n * spec.filters, h, h);
                h /= 2;
                y
            } else {
                z
            };
        }
        Ok(self.head_input(cur, n))
    }

    /// Inference-mode logits, `[n][num_classes]`.
    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        let n = self.check_input(x)?;
        let f = self.features(x)?;
        Ok(self.fc.forward(&f, n))
    }

    /// Training-mode forward pass (batch statistics), keeping what backward needs.
    pub(crate) fn forward_train(&self, x: &[T]) -> Result<Tape<T>> {
        let n = self.check_input(x)?;
        let mut h = self.arch.input_size;
        let mut cur = x.to_vec();
        let mut blocks = Vec::with_capacity(self.convs.len());
        for ((conv, bn), spec) in self.convs.iter().zip(&self.norms).zip(&self.arch.blocks) {
            let (z, cols) = conv.forward(&cur, n, h, h);
            let side = h;
            h = h + 1 - KERNEL;
            let (mut act, cache) = bn.forward_train(&z, n, h * h);
            relu_inplace(&mut act);
            let pool_idx = if spec.pool {
                let (y, idx) = maxpool_forward(&act, n * spec.filters, h, h);
                cur = y;
                h /= 2;
                Some(idx)
            } else {
                cur = act.clone();
                None
            };
            blocks.push(BlockTape {
                side,
                cols,
                bn: cache,
                act,
                pool_idx,
            });
        }
        let fc_in = self.head_input(cur, n);
        let logits = self.fc.forward(&fc_in, n);
        Ok(Tape {
            n,
            blocks,
            fc_in,
            logits,
        })
    }

    /// Gradients of a loss given its gradient with respect to the logits.
    pub(crate) fn backward(&self, tape: &Tape<T>, dlogits: &[T]) -> Grads<T> {
        let n = tape.n;
        let g = self.fc.backward(dlogits, &tape.fc_in, n);
        let mut tail = vec![g.weight, g.bias];
        let mut d = g.input;
        let mut grads: Vec<Vec<T>> = Vec::with_capacity(4 * self.convs.len() + 2);
        for (i, bt) in tape.blocks.iter().enumerate().rev() {
            let conv = &self.convs[i];
            let c = conv.out_ch;
            let h = bt.side + 1 - KERNEL;
            if i + 1 == tape.blocks.len() && self.arch.head == Head::GlobalAvgPool {
                let p = if bt.pool_idx.is_some() { (h / 2) * (h / 2) } else { h * h };
                let inv = T::one() / T::from_usize(p).unwrap();
                d = d.iter().flat_map(|&v| std::iter::repeat_n(v * inv, p)).collect();
            }
            if let Some(idx) = &bt.pool_idx {
                d = maxpool_backward(&d, idx, n * c, h, h);
            }
            for (dv, &a) in d.iter_mut().zip(&bt.act) {
                if a <= T::zero() {
                    *dv = T::zero();
                }
            }
            let bg = self.norms[i].backward(&d, &bt.bn, n, h * h);
            let cg = conv.backward(&bg.input, &bt.cols, n, bt.side, bt.side, i > 0);
            grads.push(bg.beta);
            grads.push(bg.gamma);
            grads.push(cg.bias);
            grads.push(cg.weight);
            if let Some(dx) = cg.input {
                d = dx;
            }
        }
        grads.reverse();
        grads.append(&mut tail);
        grads
    }

    /// Mean cross-entropy over the batch in training mode, and its gradients.
    pub fn loss_and_grads(&self, x: &[T], labels: &[usize]) -> Result<(T, Vec<T>, Grads<T>)> {
        let tape = self.forward_train(x)?;
        if labels.len() != tape.n {
            return Err(Error::Input(format!(
                "{} labels for {} inputs",
                labels.len(),
                tape.n
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.arch.num_classes) {
            return Err(Error::Input(format!("label index {bad} out of range")));
        }
        let (loss, dlogits) = cross_entropy(&tape.logits, labels, self.arch.num_classes);
        let grads = self.backward(&tape, &dlogits);
        Ok((loss, tape.logits, grads))
    }

    /// Training-mode loss only.
    pub fn loss(&self, x: &[T], labels: &[usize]) -> Result<T> {
        let tape = self.forward_train(x)?;
        Ok(cross_entropy(&tape.logits, labels, self.arch.num_classes).0)
    }

    /// Fold one training batch's statistics into the running estimates.
    pub fn update_running_stats(&mut self, x: &[T]) -> Result<()> {
        let tape = self.forward_train(x)?;
        self.absorb_tape(&tape);
        Ok(())
    }

    pub(crate) fn absorb_tape(&mut self, tape: &Tape<T>) {
        for (bn, bt) in self.norms.iter_mut().zip(&tape.blocks) {
            let h = bt.side + 1 - KERNEL;
            bn.update_running(&bt.bn, tape.n * h * h);
        }
    }
}
