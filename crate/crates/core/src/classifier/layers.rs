//! Batch-tensor layers with hand-written backward passes. Activations are
//! laid out `[batch][channel][row][col]`, contiguous.

use super::real::{gemm, Real, View};
use crate::par;

/// Convolution kernel side.
pub const KERNEL: usize = 3;
const KK: usize = KERNEL * KERNEL;
/// Samples per partial weight-gradient accumulator. Fixed so gradient sums
/// do not depend on the number of worker threads.
const GRAD_CHUNK: usize = 8;

/// 3x3 valid (unpadded) convolution, stride 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `[out][in][3][3]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let (ho, wo) = (h + 1 - KERNEL, w + 1 - KERNEL);
    let p = ho * wo;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[(ci * KK + ky * KERNEL + kx) * p..][..p];
                for oy in 0..ho {
                    let src = &plane[(oy + ky) * w + kx..][..wo];
                    row[oy * wo..(oy + 1) * wo].copy_from_slice(src);
                }
            }
        }
    }
}

fn col2im_add<T: Real>(dcols: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let (ho, wo) = (h + 1 - KERNEL, w + 1 - KERNEL);
    let p = ho * wo;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &dcols[(ci * KK + ky * KERNEL + kx) * p..][..p];
                for oy in 0..ho {
                    let dst = &mut plane[(oy + ky) * w + kx..][..wo];
                    for (d, &s) in dst.iter_mut().zip(&row[oy * wo..(oy + 1) * wo]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

pub struct ConvGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub input: Option<Vec<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Returns the output and the im2col buffer (needed for backward).
    pub fn forward(&self, x: &[T], n: usize, h: usize, w: usize) -> (Vec<T>, Vec<T>) {
        let (ho, wo) = (h + 1 - KERNEL, w + 1 - KERNEL);
        let p = ho * wo;
        let ck = self.in_ch * KK;
        let in_len = self.in_ch * h * w;
        debug_assert_eq!(x.len(), n * in_len);
        let mut cols = vec![T::zero(); n * ck * p];
        par::for_each_chunk_mut(&mut cols, ck * p, |i, c| {
            im2col(&x[i * in_len..(i + 1) * in_len], self.in_ch, h, w, c)
        });
        let f = self.out_ch;
        let mut y = vec![T::zero(); n * f * p];
        par::for_each_chunk_mut(&mut y, f * p, |i, ys| {
            for (fi, row) in ys.chunks_exact_mut(p).enumerate() {
                row.fill(self.bias[fi]);
            }
            gemm(
                f,
                ck,
                p,
                T::one(),
                &self.weight,
                View::rm(ck),
                &cols[i * ck * p..(i + 1) * ck * p],
                View::rm(p),
                T::one(),
                ys,
                View::rm(p),
            );
        });
        (y, cols)
    }

    pub fn backward(
        &self,
        dy: &[T],
        cols: &[T],
        n: usize,
        h: usize,
        w: usize,
        need_input: bool,
    ) -> ConvGrads<T> {
        let (ho, wo) = (h + 1 - KERNEL, w + 1 - KERNEL);
        let p = ho * wo;
        let ck = self.in_ch * KK;
        let f = self.out_ch;
        let mut bias = vec![T::zero(); f];
        for s in dy.chunks_exact(f * p) {
            for (b, row) in bias.iter_mut().zip(s.chunks_exact(p)) {
                *b += row.iter().copied().sum::<T>();
            }
        }
        let chunks = n.div_ceil(GRAD_CHUNK);
        let partials = par::map_range(chunks, |ci| {
            let mut acc = vec![T::zero(); f * ck];
            for i in ci * GRAD_CHUNK..((ci + 1) * GRAD_CHUNK).min(n) {
                gemm(
                    f,
                    p,
                    ck,
                    T::one(),
                    &dy[i * f * p..(i + 1) * f * p],
                    View::rm(p),
                    &cols[i * ck * p..(i + 1) * ck * p],
                    View::tr(p),
                    T::one(),
                    &mut acc,
                    View::rm(ck),
                );
            }
            acc
        });
        let mut weight = vec![T::zero(); f * ck];
        for part in partials {
            for (w_, v) in weight.iter_mut().zip(part) {
                *w_ += v;
            }
        }
        let input = need_input.then(|| {
            let in_len = self.in_ch * h * w;
            let mut dx = vec![T::zero(); n * in_len];
            par::for_each_chunk_mut(&mut dx, in_len, |i, dxs| {
                let mut dcols = vec![T::zero(); ck * p];
                gemm(
                    ck,
                    f,
                    p,
                    T::one(),
                    &self.weight,
                    View::tr(ck),
                    &dy[i * f * p..(i + 1) * f * p],
                    View::rm(p),
                    T::zero(),
                    &mut dcols,
                    View::rm(p),
                );
                col2im_add(&dcols, self.in_ch, h, w, dxs);
            });
            dx
        });
        ConvGrads {
            weight,
            bias,
            input,
        }
    }
}

/// Per-channel batch normalization over batch and spatial positions.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
}

pub struct BnGrads<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub input: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Batch-statistics normalization; returns `gamma * xhat + beta`.
    pub fn forward_train(&self, x: &[T], n: usize, p: usize) -> (Vec<T>, BnCache<T>) {
        let c = self.channels();
        let m = T::from_usize(n * p).unwrap();
        let stats = par::map_range(c, |ch| {
            let mut sum = T::zero();
            for i in 0..n {
                sum += x[(i * c + ch) * p..][..p].iter().copied().sum::<T>();
            }
            let mean = sum / m;
            let mut sq = T::zero();
            for i in 0..n {
                for &v in &x[(i * c + ch) * p..][..p] {
                    let d = v - mean;
                    sq += d * d;
                }
            }
            (mean, sq / m)
        });
        let mean: Vec<T> = stats.iter().map(|s| s.0).collect();
        let var: Vec<T> = stats.iter().map(|s| s.1).collect();
        let eps = T::lit(BN_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); x.len()];
        par::for_each_chunk_mut(&mut xhat, c * p, |i, s| {
            for ch in 0..c {
                let src = &x[(i * c + ch) * p..][..p];
                for (d, &v) in s[ch * p..(ch + 1) * p].iter_mut().zip(src) {
                    *d = (v - mean[ch]) * inv_std[ch];
                }
            }
        });
        let mut y = xhat.clone();
        self.affine(&mut y, p);
        (
            y,
            BnCache {
                xhat,
                inv_std,
                mean,
                var,
            },
        )
    }

    fn affine(&self, y: &mut [T], p: usize) {
        let c = self.channels();
        par::for_each_chunk_mut(y, c * p, |_, s| {
            for ch in 0..c {
                let (g, b) = (self.gamma[ch], self.beta[ch]);
                for v in &mut s[ch * p..(ch + 1) * p] {
                    *v = g * *v + b;
                }
            }
        });
    }

    /// Running-statistics normalization, in place.
    pub fn forward_eval(&self, x: &mut [T], p: usize) {
        let c = self.channels();
        let eps = T::lit(BN_EPS);
        par::for_each_chunk_mut(x, c * p, |_, s| {
            for ch in 0..c {
                let inv = T::one() / (self.running_var[ch] + eps).sqrt();
                let (g, b, mu) = (self.gamma[ch], self.beta[ch], self.running_mean[ch]);
                for v in &mut s[ch * p..(ch + 1) * p] {
                    *v = g * (*v - mu) * inv + b;
                }
            }
        });
    }

    /// `running = momentum * running + (1 - momentum) * batch`; the variance
    /// uses the unbiased batch estimate.
    pub fn update_running(&mut self, cache: &BnCache<T>, count: usize) {
        let mom = T::lit(BN_MOMENTUM);
        let keep = T::one() - mom;
        let unbias = if count > 1 {
            T::from_usize(count).unwrap() / T::from_usize(count - 1).unwrap()
        } else {
            T::one()
        };
        for ch in 0..self.channels() {
            self.running_mean[ch] = mom * self.running_mean[ch] + keep * cache.mean[ch];
            self.running_var[ch] = mom * self.running_var[ch] + keep * cache.var[ch] * unbias;
        }
    }

    pub fn backward(&self, dy: &[T], cache: &BnCache<T>, n: usize, p: usize) -> BnGrads<T> {
        let c = self.channels();
        let sums = par::map_range(c, |ch| {
            let (mut sd, mut sdx) = (T::zero(), T::zero());
            for i in 0..n {
                let off = (i * c + ch) * p;
                for (&d, &xh) in dy[off..off + p].iter().zip(&cache.xhat[off..off + p]) {
                    sd += d;
                    sdx += d * xh;
                }
            }
            (sd, sdx)
        });
        let beta: Vec<T> = sums.iter().map(|s| s.0).collect();
        let gamma: Vec<T> = sums.iter().map(|s| s.1).collect();
        let m = T::from_usize(n * p).unwrap();
        let mut input = vec![T::zero(); dy.len()];
        par::for_each_chunk_mut(&mut input, c * p, |i, s| {
            for ch in 0..c {
                let k = self.gamma[ch] * cache.inv_std[ch] / m;
                let off = (i * c + ch) * p;
                for ((d, &g), &xh) in s[ch * p..(ch + 1) * p]
                    .iter_mut()
                    .zip(&dy[off..off + p])
                    .zip(&cache.xhat[off..off + p])
                {
                    *d = k * (m * g - beta[ch] - xh * gamma[ch]);
                }
            }
        });
        BnGrads { gamma, beta, input }
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// 2x2 max pool, stride 2, odd edges dropped. Returns output and the
/// in-plane argmax index of each output element.
pub fn maxpool_forward<T: Real>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut y = vec![T::zero(); planes * ho * wo];
    let mut idx = vec![0u32; planes * ho * wo];
    for pl in 0..planes {
        let src = &x[pl * h * w..(pl + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let j = (2 * oy + dy) * w + 2 * ox + dx;
                    if src[j] > src[best] {
                        best = j;
                    }
                }
                let o = pl * ho * wo + oy * wo + ox;
                y[o] = src[best];
                idx[o] = best as u32;
            }
        }
    }
    (y, idx)
}

pub fn maxpool_backward<T: Real>(
    dy: &[T],
    idx: &[u32],
    planes: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let per = (h / 2) * (w / 2);
    let mut dx = vec![T::zero(); planes * h * w];
    for pl in 0..planes {
        for o in 0..per {
            dx[pl * h * w + idx[pl * per + o] as usize] += dy[pl * per + o];
        }
    }
    dx
}

/// Fully connected layer, `y = x W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub struct DenseGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub input: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[T], n: usize) -> Vec<T> {
        let (d, o) = (self.inputs, self.outputs);
        let mut y = vec![T::zero(); n * o];
        for row in y.chunks_exact_mut(o) {
            row.copy_from_slice(&self.bias);
        }
        gemm(
            n,
            d,
            o,
            T::one(),
            x,
            View::rm(d),
            &self.weight,
            View::tr(d),
            T::one(),
            &mut y,
            View::rm(o),
        );
        y
    }

    pub fn backward(&self, dy: &[T], x: &[T], n: usize) -> DenseGrads<T> {
        let (d, o) = (self.inputs, self.outputs);
        let mut weight = vec![T::zero(); o * d];
        gemm(
            o,
            n,
            d,
            T::one(),
            dy,
            View::tr(o),
            x,
            View::rm(d),
            T::zero(),
            &mut weight,
            View::rm(d),
        );
        let mut bias = vec![T::zero(); o];
        for row in dy.chunks_exact(o) {
            for (b, &g) in bias.iter_mut().zip(row) {
                *b += g;
            }
        }
        let mut input = vec![T::zero(); n * d];
        gemm(
            n,
            o,
            d,
            T::one(),
            dy,
            View::rm(o),
            &self.weight,
            View::rm(d),
            T::zero(),
            &mut input,
            View::rm(d),
        );
        DenseGrads {
            weight,
            bias,
            input,
        }
    }
}

/// Row-wise softmax of `[n][c]` logits.
pub fn softmax_rows<T: Real>(logits: &[T], c: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy<T: Real>(logits: &[T], labels: &[usize], c: usize) -> (T, Vec<T>) {
    let n = labels.len();
    let probs = softmax_rows(logits, c);
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let p = probs[i * c + y].max(T::min_positive_value());
        loss += -p.ln();
        grad[i * c + y] = grad[i * c + y] - T::one();
    }
    for g in grad.iter_mut() {
        *g *= inv_n;
    }
    (loss * inv_n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_direct_loops() {
        let conv = Conv2d::<f64> {
            in_ch: 2,
            out_ch: 3,
            weight: (0..54).map(|i| (i as f64 * 0.37).sin()).collect(),
            bias: vec![0.1, -0.2, 0.3],
        };
        let (n, h, w) = (2, 5, 6);
        let x: Vec<f64> = (0..n * 2 * h * w).map(|i| (i as f64 * 0.11).cos()).collect();
        let (y, _) = conv.forward(&x, n, h, w);
        let (ho, wo) = (h - 2, w - 2);
        for b in 0..n {
            for f in 0..3 {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = conv.bias[f];
                        for c in 0..2 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    acc += conv.weight[((f * 2 + c) * 3 + ky) * 3 + kx]
                                        * x[((b * 2 + c) * h + oy + ky) * w + ox + kx];
                                }
                            }
                        }
                        let got = y[((b * 3 + f) * ho + oy) * wo + ox];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = softmax_rows(&[3.0f64, 3.0, 3.0, 3.0], 4);
        assert!(p.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let x = [1.0f64, 5.0, 2.0, 3.0];
        let (y, idx) = maxpool_forward(&x, 1, 2, 2);
        assert_eq!(y, vec![5.0]);
        assert_eq!(maxpool_backward(&[1.0], &idx, 1, 2, 2), vec![0.0, 1.0, 0.0, 0.0]);
    }
}
