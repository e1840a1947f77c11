//! One-class ν-SVM (Schölkopf formulation) solved with SMO, following the
//! libsvm conventions: `0 <= alpha_i <= 1`, `sum(alpha) = nu * l`, decision
//! `f(x) = sum_i alpha_i k(x_i, x) - rho`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const TAU: f64 = 1e-12;
const TOLERANCE: f64 = 1e-6;
const MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassSvm {
    pub gamma: f64,
    pub nu: f64,
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub rho: f64,
}

pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl OneClassSvm {
    pub fn fit(points: &[Vec<f64>], nu: f64, gamma: f64) -> Result<Self> {
        let l = points.len();
        if l < 2 {
            return Err(Error::Fit("one-class SVM needs at least two points".into()));
        }
        if !(nu > 0.0 && nu <= 1.0) || !(gamma > 0.0) {
            return Err(Error::Fit(format!("invalid nu {nu} or gamma {gamma}")));
        }
        if points.iter().all(|p| p == &points[0]) {
            return Err(Error::Fit("all training points are identical".into()));
        }
        let k: Vec<Vec<f64>> = points
            .iter()
            .map(|a| points.iter().map(|b| rbf(gamma, a, b)).collect())
            .collect();

        let total = nu * l as f64;
        let full = (total.floor() as usize).min(l);
        let mut alpha = vec![0.0; l];
        alpha[..full].fill(1.0);
        if full < l {
            alpha[full] = total - full as f64;
        }
        let mut grad: Vec<f64> = (0..l)
            .map(|t| (0..l).map(|s| k[t][s] * alpha[s]).sum())
            .collect();

        for _ in 0..MAX_ITER {
            // i: steepest descent direction among points that can grow.
            let mut i = None;
            let mut gmax = f64::NEG_INFINITY;
            for t in 0..l {
                if alpha[t] < 1.0 && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i = Some(t);
                }
            }
            let Some(i) = i else { break };
            let mut j = None;
            let mut gmax2 = f64::NEG_INFINITY;
            let mut best = f64::INFINITY;
            for t in 0..l {
                if alpha[t] <= 0.0 {
                    continue;
                }
                gmax2 = gmax2.max(grad[t]);
                let b = gmax + grad[t];
                if b > 0.0 {
                    let a = (k[i][i] + k[t][t] - 2.0 * k[i][t]).max(TAU);
                    let obj = -(b * b) / a;
                    if obj <= best {
                        best = obj;
                        j = Some(t);
                    }
                }
            }
            if gmax + gmax2 < TOLERANCE {
                break;
            }
            let Some(j) = j else { break };
            let a = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(TAU);
            let step = ((grad[j] - grad[i]) / a).min(1.0 - alpha[i]).min(alpha[j]);
            alpha[i] += step;
            alpha[j] -= step;
            for t in 0..l {
                grad[t] += step * (k[t][i] - k[t][j]);
            }
        }

        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum, mut free) = (0.0, 0usize);
        for t in 0..l {
            if alpha[t] >= 1.0 {
                lb = lb.max(grad[t]);
            } else if alpha[t] <= 0.0 {
                ub = ub.min(grad[t]);
            } else {
                sum += grad[t];
                free += 1;
            }
        }
        let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
        let (support, coef) = points
            .iter()
            .zip(&alpha)
            .filter(|(_, &a)| a > 0.0)
            .map(|(p, &a)| (p.clone(), a))
            .unzip();
        Ok(OneClassSvm {
            gamma,
            nu,
            support,
            coef,
            rho,
        })
    }

    /// Positive inside the boundary, negative outside.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, &a)| a * rbf(self.gamma, s, x))
            .sum::<f64>()
            - self.rho
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::seed;

    fn cloud(n: usize, dim: usize, s: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(s);
        (0..n)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn outlier_fraction_respects_nu() {
        let pts = cloud(300, 4, 1);
        let svm = OneClassSvm::fit(&pts, 0.1, 0.25).unwrap();
        let outside = pts.iter().filter(|p| svm.decision(p) < 0.0).count();
        assert!(outside as f64 <= 0.1 * 300.0 + 3.0, "{outside}");
        let coef_sum: f64 = svm.coef.iter().sum();
        assert!((coef_sum - 30.0).abs() < 1e-9);
        assert!(svm.support.len() as f64 >= 0.1 * 300.0);
    }

    #[test]
    fn held_out_points_are_mostly_accepted_and_far_points_rejected() {
        let svm = OneClassSvm::fit(&cloud(300, 4, 2), 0.1, 0.25).unwrap();
        let test = cloud(200, 4, 3);
        let accepted = test.iter().filter(|p| svm.decision(p) >= 0.0).count();
        assert!(accepted as f64 >= 0.8 * 200.0, "{accepted}");
        assert!(svm.decision(&[8.0, 8.0, 8.0, 8.0]) < 0.0);
    }

    #[test]
    fn translation_leaves_scores_unchanged() {
        let pts = cloud(60, 3, 4);
        let shift = [5.0, -2.0, 0.5];
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let a = OneClassSvm::fit(&pts, 0.2, 0.3).unwrap();
        let b = OneClassSvm::fit(&moved, 0.2, 0.3).unwrap();
        let mut rng = seed::rng(9);
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let qm: Vec<f64> = q.iter().zip(&shift).map(|(a, b)| a + b).collect();
            assert!((a.decision(&q) - b.decision(&qm)).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_inputs_fail() {
        assert!(OneClassSvm::fit(&vec![vec![1.0, 2.0]; 5], 0.1, 1.0).is_err());
        assert!(OneClassSvm::fit(&[vec![1.0]], 0.1, 1.0).is_err());
    }
}
