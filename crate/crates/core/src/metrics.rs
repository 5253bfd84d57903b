//! Evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::classification::check_labels;
use crate::error::{Error, Result};

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("rmse of an empty set".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

fn check_pair(prob_plus: &[f64], labels: &[f64]) -> Result<()> {
    if prob_plus.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: prob_plus.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    check_labels(labels)
}

/// Fraction classified correctly with `+1` iff `prob_plus ≥ ½`.
pub fn accuracy(prob_plus: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(prob_plus, labels)?;
    let hits = prob_plus
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p >= 0.5) == (**y > 0.0))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mann–Whitney estimate of `P(score₊ > score₋)`, ties counted as ½.
pub fn auc(prob_plus: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(prob_plus, labels)?;
    let n_pos = labels.iter().filter(|y| **y > 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&i, &j| prob_plus[i].total_cmp(&prob_plus[j]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && prob_plus[order[end]] == prob_plus[order[start]] {
            end += 1;
        }
        // ranks are 1-based; tied block shares the average rank
        let avg = 0.5 * ((start + 1) + end) as f64;
        rank_sum += avg * order[start..end].iter().filter(|&&i| labels[i] > 0.0).count() as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
}

pub fn accuracy_auc(prob_plus: &[f64], labels: &[f64]) -> Result<ClassMetrics> {
    let accuracy = accuracy(prob_plus, labels)?;
    let auc = match auc(prob_plus, labels) {
        Ok(v) => Some(v),
        Err(Error::OneClassOnly) => None,
        Err(e) => return Err(e),
    };
    Ok(ClassMetrics { accuracy, auc })
}

/// Sample mean and standard deviation (`n − 1` denominator; zero for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
