//! Accuracy and ROC metrics.

use serde::{Deserialize, Serialize};

use crate::classifier::PosteriorMatrix;
use crate::{Error, Result};

/// ROC curve over every distinct score. Point `k` classifies scores
/// `>= thresholds[k]` as positive; the first threshold is `+inf` and the
/// last `-inf`, so the curve runs from (0, 0) to (1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
    /// Exact counts behind each point.
    pub true_positives: Vec<u64>,
    pub false_positives: Vec<u64>,
    pub positives: u64,
    pub negatives: u64,
}

pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Metric("ROC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (vec![0u64], vec![0u64]);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (mut t, mut f) = (*tp.last().unwrap(), *fp.last().unwrap());
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                t += 1;
            } else {
                f += 1;
            }
            k += 1;
        }
        thresholds.push(s);
        tp.push(t);
        fp.push(f);
    }
    thresholds.push(f64::NEG_INFINITY);
    tp.push(positives);
    fp.push(negatives);
    let points = tp
        .iter()
        .zip(&fp)
        .map(|(&t, &f)| (f as f64 / negatives as f64, t as f64 / positives as f64))
        .collect();
    Ok(RocCurve {
        points,
        thresholds,
        true_positives: tp,
        false_positives: fp,
        positives,
        negatives,
    })
}

/// Trapezoidal area under the curve. The sum is accumulated in integer
/// counts, so it equals the rank statistic exactly.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut twice: u128 = 0;
    for k in 1..curve.true_positives.len() {
        let dfp = (curve.false_positives[k] - curve.false_positives[k - 1]) as u128;
        twice += dfp * (curve.true_positives[k] + curve.true_positives[k - 1]) as u128;
    }
    twice as f64 / (2 * curve.positives as u128 * curve.negatives as u128) as f64
}

/// Pool every (observation, class) pair into one binary problem: score
/// `probs[o, c]`, positive iff `true_labels[o]` is class `c`. Labels outside
/// the class list (e.g. rogue devices) are negatives in every column.
pub fn micro_average_roc(posteriors: &PosteriorMatrix, true_labels: &[&str]) -> Result<RocCurve> {
    if true_labels.len() != posteriors.observations() {
        return Err(Error::Metric(format!(
            "{} labels for {} observations",
            true_labels.len(),
            posteriors.observations()
        )));
    }
    let c = posteriors.classes();
    let mut scores = Vec::with_capacity(true_labels.len() * c);
    let mut labels = Vec::with_capacity(true_labels.len() * c);
    for (o, t) in true_labels.iter().enumerate() {
        for (k, class) in posteriors.col_classes.iter().enumerate() {
            scores.push(posteriors.probs[(o, k)]);
            labels.push(class == t);
        }
    }
    roc(&scores, &labels)
}

pub fn accuracy<T: PartialEq>(predictions: &[T], truth: &[T]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Metric("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Argmax accuracy of a posterior matrix against true labels.
pub fn posterior_accuracy(posteriors: &PosteriorMatrix, true_labels: &[&str]) -> Result<f64> {
    accuracy(&posteriors.predicted_labels(), true_labels)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    use super::*;
    use crate::grid::Grid;
    use crate::seed;

    /// O(n^2) rank statistic: (2 * wins + ties) / (2 * P * N).
    fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut twice, mut p, mut n) = (0u128, 0u128, 0u128);
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                n += 1;
                continue;
            }
            p += 1;
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        twice as f64 / (2 * p * n) as f64
    }

    /// Brute-force curve point at threshold `t`.
    fn point_at(scores: &[f64], labels: &[bool], t: f64) -> (f64, f64) {
        let p = labels.iter().filter(|&&l| l).count() as f64;
        let n = labels.len() as f64 - p;
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= t).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as f64;
        (fp / n, tp / p)
    }

    #[test]
    fn separated_scores_reach_the_corner() {
        let c = roc(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert!(c.points.contains(&(0.0, 1.0)));
        assert_eq!(auc(&c), 1.0);
        assert_eq!(c.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn constant_scores_give_the_diagonal() {
        let c = roc(&[0.5; 6], &[true, false, true, false, true, false]).unwrap();
        assert_eq!(c.points, vec![(0.0, 0.0), (1.0, 1.0), (1.0, 1.0)]);
        assert_eq!(auc(&c), 0.5);
    }

    #[test]
    fn shuffled_labels_are_near_chance() {
        let mut rng = seed::rng(21);
        let mut labels: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        let scores: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
        labels.shuffle(&mut rng);
        let a = auc(&roc(&scores, &labels).unwrap());
        assert!((a - 0.5).abs() <= 0.05, "{a}");
    }

    #[test]
    fn ten_sample_toy_matches_pairwise_oracle() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.65, 0.2, 0.9, 0.55, 0.4];
        let labels = [false, true, false, true, false, true, false, true, true, false];
        let c = roc(&scores, &labels).unwrap();
        assert_eq!(auc(&c), mann_whitney(&scores, &labels));
        for (p, &t) in c.points.iter().zip(&c.thresholds) {
            assert_eq!(*p, point_at(&scores, &labels, t));
        }
    }

    #[test]
    fn single_class_labels_are_an_error() {
        assert!(matches!(roc(&[0.1, 0.2], &[true, true]), Err(Error::Metric(_))));
        assert!(matches!(roc(&[0.1], &[true, false]), Err(Error::Metric(_))));
    }

    fn matrix(rows: Vec<Vec<f64>>, classes: &[&str]) -> PosteriorMatrix {
        let o = rows.len();
        PosteriorMatrix::new(
            Grid::from_vec(o, classes.len(), rows.concat()),
            (0..o).map(|i| i.to_string()).collect(),
            classes.iter().map(|c| c.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn micro_average_extremes() {
        let id = matrix(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], &["A", "B", "C"]);
        assert_eq!(auc(&micro_average_roc(&id, &["A", "B", "C"]).unwrap()), 1.0);
        let third = 1.0 / 3.0;
        let uni = matrix(vec![vec![third; 3]; 3], &["A", "B", "C"]);
        assert_eq!(auc(&micro_average_roc(&uni, &["A", "B", "C"]).unwrap()), 0.5);
    }

    #[test]
    fn micro_average_matches_hand_flattening() {
        let m = matrix(
            vec![
                vec![0.7, 0.2, 0.1],
                vec![0.3, 0.4, 0.3],
                vec![0.25, 0.25, 0.5],
                vec![0.6, 0.3, 0.1],
            ],
            &["A", "B", "C"],
        );
        let truth = ["A", "B", "C", "B"];
        // Row-major flattening of the 12 (observation, class) pairs.
        let scores = [0.7, 0.2, 0.1, 0.3, 0.4, 0.3, 0.25, 0.25, 0.5, 0.6, 0.3, 0.1];
        let labels = [
            true, false, false, false, true, false, false, false, true, false, true, false,
        ];
        let pooled = micro_average_roc(&m, &truth).unwrap();
        assert_eq!(pooled, roc(&scores, &labels).unwrap());
        assert_eq!(auc(&pooled), mann_whitney(&scores, &labels));
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[2, 3, 1], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(accuracy(&["a", "b", "a", "c"], &["a", "b", "b", "c"]).unwrap(), 0.75);
        assert!(matches!(accuracy::<u8>(&[], &[]), Err(Error::Metric(_))));
    }

    proptest! {
        #[test]
        fn roc_matches_rank_oracle(n in 2usize..=50, s in any::<u64>()) {
            let mut rng = seed::rng(s);
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            labels[0] = true;
            labels[1] = false;
            // Coarse grid so ties are common.
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
            let c = roc(&scores, &labels).unwrap();
            prop_assert_eq!(auc(&c), mann_whitney(&scores, &labels));
            for w in c.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
            for (p, &t) in c.points.iter().zip(&c.thresholds) {
                prop_assert_eq!(*p, point_at(&scores, &labels, t));
            }
        }
    }
}
