//! Confusion counts and the derived ratios. FAILED is the positive class.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    /// Tallies `(predicted_failed, actually_failed)` pairs.
    pub fn from_pairs<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        let mut c = Confusion::default();
        for (pred, actual) in pairs {
            c.record(pred, actual);
        }
        c
    }

    pub fn record(&mut self, predicted_failed: bool, actually_failed: bool) {
        match (predicted_failed, actually_failed) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub error: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalMetrics {
    /// Ratios from counts; a zero denominator yields 0.
    pub fn from_confusion(c: Confusion) -> Self {
        let n = c.total();
        EvalMetrics {
            confusion: c,
            accuracy: ratio(c.tp + c.tn, n),
            precision: ratio(c.tp, c.tp + c.fp),
            recall: ratio(c.tp, c.tp + c.fn_),
            error: ratio(c.fp + c.fn_, n),
        }
    }

    /// Component-wise mean of per-fold metrics (counts are summed). The mean error is
    /// the complement of the mean accuracy.
    pub fn mean(folds: &[EvalMetrics]) -> EvalMetrics {
        let k = folds.len().max(1) as f64;
        let mut confusion = Confusion::default();
        for f in folds {
            confusion.add(&f.confusion);
        }
        let accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / k;
        EvalMetrics {
            confusion,
            accuracy,
            precision: folds.iter().map(|f| f.precision).sum::<f64>() / k,
            recall: folds.iter().map(|f| f.recall).sum::<f64>() / k,
            error: if folds.is_empty() { 0.0 } else { 1.0 - accuracy },
        }
    }
}
