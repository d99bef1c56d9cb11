//! Confusion-matrix accounting and the expression challenge score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight of macro F1 in the challenge score.
pub const F1_WEIGHT: f64 = 0.67;
/// Weight of total accuracy in the challenge score.
pub const ACCURACY_WEIGHT: f64 = 0.33;

/// Rows are true classes, columns are predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        let mut cm = ConfusionMatrix::new(k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::dim("ConfusionMatrix::from_rows", "columns", k, row.len()));
            }
            cm.counts[i * k..(i + 1) * k].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn update(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for (label, what) in [(truth, "true label"), (predicted, "predicted label")] {
            if label >= self.classes {
                return Err(Error::invalid(
                    "ConfusionMatrix::update",
                    format!("{what} {label} out of range for {} classes", self.classes),
                ));
            }
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    /// Elementwise sum; used to reduce per-shard matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::dim("ConfusionMatrix::merge", "classes", self.classes, other.classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.classes..(i + 1) * self.classes].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, j)).sum()
    }

    pub fn summarize(&self) -> Result<Summary> {
        let total = self.total();
        if total == 0 {
            return Err(Error::invalid("summarize", "confusion matrix is empty"));
        }
        let k = self.classes;
        let trace: u64 = (0..k).map(|i| self.get(i, i)).sum();
        let mut recall = Vec::with_capacity(k);
        let mut precision = Vec::with_capacity(k);
        let mut f1 = Vec::with_capacity(k);
        for i in 0..k {
            let tp = self.get(i, i) as f64;
            let r = ratio(tp, self.row_sum(i) as f64);
            let p = ratio(tp, self.col_sum(i) as f64);
            recall.push(r);
            precision.push(p);
            f1.push(ratio(2.0 * p * r, p + r));
        }
        let macro_f1 = f1.iter().sum::<f64>() / k as f64;
        Ok(Summary {
            accuracy: trace as f64 / total as f64,
            per_class_accuracy: recall,
            per_class_precision: precision,
            per_class_f1: f1,
            macro_f1,
        })
    }
}

/// `num / den`, with `0 / 0 = 0`.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    /// Per-class recall (row-normalized diagonal).
    pub per_class_accuracy: Vec<f64>,
    pub per_class_precision: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
}

/// `0.67 · macro_f1 + 0.33 · accuracy`
pub fn challenge_score(accuracy: f64, macro_f1: f64) -> Result<f64> {
    for (v, what) in [(accuracy, "accuracy"), (macro_f1, "macro_f1")] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid("challenge_score", format!("{what} {v} outside [0, 1]")));
        }
    }
    Ok(F1_WEIGHT * macro_f1 + ACCURACY_WEIGHT * accuracy)
}

/// The metrics JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<f64>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub score: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn from_matrix(cm: &ConfusionMatrix) -> Result<Self> {
        let s = cm.summarize()?;
        Ok(MetricsReport {
            score: challenge_score(s.accuracy, s.macro_f1)?,
            per_class: s.per_class_accuracy,
            accuracy: s.accuracy,
            macro_f1: s.macro_f1,
            confusion: cm.rows(),
        })
    }
}
