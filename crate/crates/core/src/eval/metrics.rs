use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_labels(gold: &[u8], predicted: &[u8]) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::shape(
                "metrics",
                format!("{} gold labels but {} predictions", gold.len(), predicted.len()),
            ));
        }
        let mut m = ConfusionMatrix::default();
        for (&g, &p) in gold.iter().zip(predicted) {
            match (g != 0, p != 0) {
                (true, true) => m.tp += 1,
                (false, true) => m.fp += 1,
                (true, false) => m.fn_ += 1,
                (false, false) => m.tn += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// Metrics whose denominator was zero; the metric itself is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n: u64,
    pub confusion: ConfusionMatrix,
    pub degenerate: Degenerate,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl MetricReport {
    /// F1 is computed as `2tp / (2tp + fp + fn)`, the harmonic mean of
    /// precision and recall in reduced form.
    pub fn from_confusion(m: ConfusionMatrix) -> Self {
        let (accuracy, _) = ratio(m.tp + m.tn, m.total());
        let (precision, dp) = ratio(m.tp, m.tp + m.fp);
        let (recall, dr) = ratio(m.tp, m.tp + m.fn_);
        let (f1, df) = if m.tp == 0 {
            (0.0, true)
        } else {
            ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn_)
        };
        MetricReport {
            accuracy,
            precision,
            recall,
            f1,
            n: m.total(),
            confusion: m,
            degenerate: Degenerate {
                precision: dp,
                recall: dr,
                f1: df,
            },
        }
    }
}

pub fn compute_metrics(gold: &[u8], predicted: &[u8]) -> Result<MetricReport> {
    if gold.is_empty() {
        return Err(Error::Empty("no labels to score".into()));
    }
    Ok(MetricReport::from_confusion(ConfusionMatrix::from_labels(
        gold, predicted,
    )?))
}
