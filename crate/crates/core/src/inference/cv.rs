use serde::{Deserialize, Serialize};

use super::optimize::{gradient_descent, GdConfig};
use super::{default_init_classification, default_init_regression, ClassificationObjective, RegressionObjective};
use crate::classification::{laplace_map, ClassifyTrainSet, NewtonConfig};
use crate::covariance::Nu;
use crate::error::{Error, Result};
use crate::metrics::rmse;
use crate::regression::{fit_regression, RegressionTrainSet};
use crate::rng::from_seed;

pub const DEFAULT_FOLDS: usize = 5;

/// Chosen `ν` and the mean held-out score of each candidate (`None` if a fold failed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub nu: Nu,
    pub scores: Vec<(Nu, Option<f64>)>,
}

fn fold_indices(n: usize, folds: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut from_seed(seed));
    (0..folds)
        .map(|k| {
            let (test, train): (Vec<_>, Vec<_>) = idx.iter().enumerate().partition(|(j, _)| j % folds == k);
            (
                train.into_iter().map(|(_, i)| *i).collect(),
                test.into_iter().map(|(_, i)| *i).collect(),
            )
        })
        .collect()
}

fn select(
    n: usize,
    candidates: &[Nu],
    folds: usize,
    seed: u64,
    score: impl Fn(Nu, &[usize], &[usize]) -> Result<f64>,
) -> Result<CvReport> {
    let mut cands = candidates.to_vec();
    cands.sort_by(|a, b| a.value().total_cmp(&b.value()));
    cands.dedup();
    match cands.len() {
        0 => return Err(Error::InvalidInput("no candidate ν".into())),
        1 => {
            return Ok(CvReport {
                nu: cands[0],
                scores: vec![(cands[0], None)],
            })
        }
        _ => {}
    }
    if folds < 2 || n < folds {
        return Err(Error::InvalidInput(format!("{folds} folds need at least that many observations, have {n}")));
    }
    let splits = fold_indices(n, folds, seed);
    let mut scores = Vec::new();
    let mut best: Option<(Nu, f64)> = None;
    let mut last_err = None;
    for nu in cands {
        let total: Result<f64> = splits.iter().map(|(tr, te)| score(nu, tr, te)).sum();
        match total {
            Ok(t) => {
                let mean = t / folds as f64;
                scores.push((nu, Some(mean)));
                if best.is_none_or(|(_, b)| mean < b) {
                    best = Some((nu, mean));
                }
            }
            Err(e) => {
                scores.push((nu, None));
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((nu, _)) => Ok(CvReport { nu, scores }),
        None => Err(last_err.expect("at least one candidate failed")),
    }
}

/// k-fold cross-validation of `ν` by held-out RMSE, fitting `(δ², α)` by
/// gradient descent on each training fold.
pub fn select_nu_regression(
    train: &RegressionTrainSet,
    candidates: &[Nu],
    folds: usize,
    seed: u64,
    gd: &GdConfig,
) -> Result<CvReport> {
    select(train.len(), candidates, folds, seed, |nu, tr, te| {
        let fold = train.select(tr);
        let obj = RegressionObjective::new(&fold, nu);
        let fit = gradient_descent(&obj, default_init_regression(&fold), gd)?;
        let model = fit_regression(&fold, &obj.params(fit.theta)?)?;
        let mut pred = Vec::with_capacity(te.len());
        for &i in te {
            pred.push(model.predict_feature(&train.features().features()[i])?.mean);
        }
        let truth: Vec<f64> = te.iter().map(|&i| train.targets()[i]).collect();
        rmse(&pred, &truth)
    })
}

/// k-fold cross-validation of `ν` by mean negative log predictive probability.
pub fn select_nu_classification(
    train: &ClassifyTrainSet,
    candidates: &[Nu],
    folds: usize,
    seed: u64,
    gd: &GdConfig,
) -> Result<CvReport> {
    select(train.len(), candidates, folds, seed, |nu, tr, te| {
        let fold = train.select(tr);
        let obj = ClassificationObjective::new(&fold, nu);
        let fit = gradient_descent(&obj, default_init_classification(&fold), gd)?;
        let state = laplace_map(&fold, &obj.params(fit.theta)?, &NewtonConfig::default())?;
        let mut total = 0.0;
        for &i in te {
            let p = state.predict_feature(&train.features().features()[i])?.prob_plus;
            let q = if train.labels()[i] > 0.0 { p } else { 1.0 - p };
            total -= q.max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / te.len() as f64)
    })
}
