//! Impersonation and enrollment-contamination attacks as dataset
//! transformations.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::feature::FeatureImage;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Impersonation,
    Contamination,
}

/// One rogue device attacking one legitimate identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackScenario {
    pub kind: AttackKind,
    pub target: String,
    pub rogue: String,
    pub seed: u64,
}

impl AttackScenario {
    pub fn validate(&self, legit: &[String], rogues: &[String]) -> Result<()> {
        if let Some(l) = legit.iter().find(|l| rogues.contains(l)) {
            return Err(Error::Config(format!("{l} is both legitimate and rogue")));
        }
        if !legit.contains(&self.target) {
            return Err(Error::Config(format!("target {} is not a legitimate device", self.target)));
        }
        if !rogues.contains(&self.rogue) {
            return Err(Error::Config(format!("{} is not a rogue device", self.rogue)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn expect(&self, kind: AttackKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Input(format!("scenario is {:?}, expected {kind:?}", self.kind)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledItem<F> {
    pub feature: F,
    pub claimed: String,
    pub truth: String,
}

impl<F> LabeledItem<F> {
    pub fn genuine(feature: F, label: impl Into<String>) -> Self {
        let label = label.into();
        LabeledItem {
            feature,
            claimed: label.clone(),
            truth: label,
        }
    }

    pub fn is_genuine(&self) -> bool {
        self.claimed == self.truth
    }
}

/// Feature items with claimed and true identities. Generic over the feature
/// payload so the same transformations apply to images and raw matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatureSet<F = FeatureImage> {
    pub items: Vec<LabeledItem<F>>,
    pub split: Split,
}

impl<F: Clone> LabeledFeatureSet<F> {
    pub fn new(items: Vec<LabeledItem<F>>, split: Split) -> Self {
        LabeledFeatureSet { items, split }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Distinct claimed labels, sorted.
    pub fn claimed_labels(&self) -> BTreeSet<&str> {
        self.items.iter().map(|i| i.claimed.as_str()).collect()
    }

    pub fn count_truth(&self, label: &str) -> usize {
        self.items.iter().filter(|i| i.truth == label).count()
    }
}

/// The target's genuine test items followed by every rogue item relabelled
/// as claiming the target.
pub fn impersonation_testset<F: Clone>(
    legit_test: &LabeledFeatureSet<F>,
    rogue_pool: &LabeledFeatureSet<F>,
    sc: &AttackScenario,
) -> Result<LabeledFeatureSet<F>> {
    sc.expect(AttackKind::Impersonation)?;
    let mut items: Vec<LabeledItem<F>> = legit_test
        .items
        .iter()
        .filter(|i| i.is_genuine() && i.truth == sc.target)
        .cloned()
        .collect();
    if items.is_empty() {
        return Err(Error::Input(format!("no genuine test items for {}", sc.target)));
    }
    for r in &rogue_pool.items {
        if r.truth == sc.target {
            return Err(Error::Input(format!("rogue pool contains the target {}", sc.target)));
        }
        items.push(LabeledItem {
            feature: r.feature.clone(),
            claimed: sc.target.clone(),
            truth: r.truth.clone(),
        });
    }
    Ok(LabeledFeatureSet::new(items, Split::Test))
}

/// Replace every genuine training item of the target by a rogue item
/// claiming the target. The rogue items are a seeded draw without
/// replacement from the pool items whose true label is `sc.rogue`, kept in
/// pool order and placed where the target's items were.
pub fn contaminate_enrollment<F: Clone>(
    train: &LabeledFeatureSet<F>,
    rogue_pool: &LabeledFeatureSet<F>,
    sc: &AttackScenario,
) -> Result<LabeledFeatureSet<F>> {
    sc.expect(AttackKind::Contamination)?;
    let slots: Vec<usize> = train
        .items
        .iter()
        .enumerate()
        .filter(|(_, i)| i.is_genuine() && i.truth == sc.target)
        .map(|(k, _)| k)
        .collect();
    let candidates: Vec<&LabeledItem<F>> = rogue_pool.items.iter().filter(|i| i.truth == sc.rogue).collect();
    if candidates.len() < slots.len() {
        return Err(Error::Input(format!(
            "{} rogue samples of {} cannot replace {} target samples",
            candidates.len(),
            sc.rogue,
            slots.len()
        )));
    }
    let mut picks = index::sample(&mut seed::rng(sc.seed), candidates.len(), slots.len()).into_vec();
    picks.sort_unstable();
    let mut out = train.clone();
    for (&slot, &pick) in slots.iter().zip(&picks) {
        out.items[slot] = LabeledItem {
            feature: candidates[pick].feature.clone(),
            claimed: sc.target.clone(),
            truth: sc.rogue.clone(),
        };
    }
    Ok(out)
}

/// Apply several contamination scenarios in order (multi-target attacks).
pub fn contaminate_all<F: Clone>(
    train: &LabeledFeatureSet<F>,
    rogue_pool: &LabeledFeatureSet<F>,
    scenarios: &[AttackScenario],
) -> Result<LabeledFeatureSet<F>> {
    let mut cur = train.clone();
    for sc in scenarios {
        cur = contaminate_enrollment(&cur, rogue_pool, sc)?;
    }
    Ok(cur)
}
