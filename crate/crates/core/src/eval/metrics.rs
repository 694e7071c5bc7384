use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class 1 is the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (1, _) => c.fp += 1,
                _ => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// NaN without positives.
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.positives())
    }

    /// NaN without negatives.
    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.negatives())
    }

    pub fn add(&self, other: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    /// NaN when only one class is present.
    pub auc: f64,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn compute(predictions: &[u8], scores: &[f64], labels: &[u8]) -> Result<Self> {
        if predictions.len() != labels.len() || scores.len() != labels.len() {
            return Err(Error::shape(
                "metrics inputs",
                &[predictions.len(), scores.len()],
                &[labels.len()],
            ));
        }
        let confusion = Confusion::from_predictions(predictions, labels);
        let auc = match roc_auc(scores, labels) {
            Ok(a) => a,
            Err(Error::UndefinedMetric(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        Ok(Self::from_confusion(confusion, auc))
    }

    pub fn from_confusion(confusion: Confusion, auc: f64) -> Self {
        Self {
            accuracy: confusion.accuracy(),
            specificity: confusion.specificity(),
            sensitivity: confusion.sensitivity(),
            auc,
            confusion,
        }
    }

    /// Per-metric mean; confusion counts are summed.
    pub fn mean(all: &[Metrics]) -> Metrics {
        let n = all.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Metrics {
            accuracy: avg(|m| m.accuracy),
            specificity: avg(|m| m.specificity),
            sensitivity: avg(|m| m.sensitivity),
            auc: avg(|m| m.auc),
            confusion: all.iter().fold(Confusion::default(), |a, m| a.add(&m.confusion)),
        }
    }
}

fn check_scores(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::shape("roc_auc", &[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidTensor("NaN score".into()));
    }
    let p = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n = labels.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes"));
    }
    Ok((p, n))
}

fn sorted_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Mann-Whitney estimate: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Counted in integers, so the only
/// rounding is the final division.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, n) = check_scores(scores, labels)?;
    let order = sorted_order(scores);
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut g = 0;
    while g < order.len() {
        let mut end = g;
        let (mut pos_in, mut neg_in) = (0u128, 0u128);
        while end < order.len() && scores[order[end]] == scores[order[g]] {
            if labels[order[end]] == 1 {
                pos_in += 1;
            } else {
                neg_in += 1;
            }
            end += 1;
        }
        twice_u += pos_in * (2 * neg_below + neg_in);
        neg_below += neg_in;
        g = end;
    }
    Ok(twice_u as f64 / (2 * p as u128 * n as u128) as f64)
}

/// Trapezoidal area under the empirical ROC curve.
pub fn roc_auc_trapezoid(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, n) = check_scores(scores, labels)?;
    let mut order = sorted_order(scores);
    order.reverse();
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut g = 0;
    while g < order.len() {
        let s = scores[order[g]];
        while g < order.len() && scores[order[g]] == s {
            if labels[order[g]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            g += 1;
        }
        let tpr = tp as f64 / p as f64;
        let fpr = fp as f64 / n as f64;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(area)
}
