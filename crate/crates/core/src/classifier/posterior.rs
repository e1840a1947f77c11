use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::{Error, Result};

/// Softmax outputs: one row per observation, one column per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMatrix {
    pub probs: Grid<f64>,
    pub row_observations: Vec<String>,
    pub col_classes: Vec<String>,
}

impl PosteriorMatrix {
    pub fn new(probs: Grid<f64>, row_observations: Vec<String>, col_classes: Vec<String>) -> Result<Self> {
        let m = PosteriorMatrix {
            probs,
            row_observations,
            col_classes,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (o, c) = self.probs.shape();
        if o != self.row_observations.len() || c != self.col_classes.len() {
            return Err(Error::Input(format!(
                "posterior matrix {o}x{c} does not match {} observations x {} classes",
                self.row_observations.len(),
                self.col_classes.len()
            )));
        }
        for r in 0..o {
            let row = self.probs.row(r);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Input(format!("row {r} has a value outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Input(format!("row {r} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn observations(&self) -> usize {
        self.probs.rows()
    }

    pub fn classes(&self) -> usize {
        self.probs.cols()
    }

    /// Column of `label`, if it is one of the classes.
    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.col_classes.iter().position(|c| c == label)
    }

    /// Argmax class index per row; ties go to the lowest index.
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.observations())
            .map(|r| {
                let row = self.probs.row(r);
                let mut best = 0;
                for (i, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    pub fn predicted_labels(&self) -> Vec<&str> {
        self.predictions()
            .into_iter()
            .map(|i| self.col_classes[i].as_str())
            .collect()
    }
}
