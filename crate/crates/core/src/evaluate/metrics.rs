use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::learn::Prediction;

/// Counts and metrics with the anomalous class (label 1) as positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub coverage: f64,
    pub confidence_threshold: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision_recall_f1(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    (p, r, f1)
}

/// Anomalous-class F1 of predicted classes against labels.
pub fn f1_of(classes: impl IntoIterator<Item = u8>, labels: &[u8]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (c, &y) in classes.into_iter().zip(labels) {
        match (c, y) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => {}
        }
    }
    precision_recall_f1(tp, fp, fn_).2
}

pub fn compute_metrics(
    predictions: &[Prediction],
    labels: &[u8],
    confidence_threshold: f64,
) -> Result<MetricsReport, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn, mut covered) = (0, 0, 0, 0, 0);
    for (p, &y) in predictions.iter().zip(labels) {
        match (p.class, y) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => tn += 1,
        }
        if p.confidence >= confidence_threshold {
            covered += 1;
        }
    }
    let (precision, recall, f1) = precision_recall_f1(tp, fp, fn_);
    let n = labels.len();
    Ok(MetricsReport {
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, n),
        coverage: ratio(covered, n),
        confidence_threshold,
    })
}
