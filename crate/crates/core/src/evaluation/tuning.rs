use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::evaluation::folds::FoldAssignment;
use crate::evaluation::methods::{candidates, fit_method, FitContext, Hyperparameters, Method, MethodFit};
use crate::evaluation::metrics::harrell_c_index;
use crate::survival::{neg_log_partial_likelihood, CoefficientMatrix, SurvivalDataset};

/// What inner cross-validation maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningCriterion {
    /// Mean Harrell C-index over outcomes and inner folds.
    #[default]
    MeanCIndex,
    /// Mean held-out log partial likelihood per event.
    ValidationLikelihood,
}

#[derive(Debug, Clone)]
pub struct TunedFit {
    pub hyperparameters: Hyperparameters,
    pub fit: MethodFit,
    /// Inner-CV score of the chosen point; `None` when the grid had one point.
    pub inner_score: Option<f64>,
}

/// Per-outcome validation score, `None` when the validation fold cannot score
/// that outcome (no events or no comparable pairs).
pub fn outcome_scores(
    coefficients: &CoefficientMatrix,
    valid: &SurvivalDataset,
    criterion: TuningCriterion,
) -> Vec<Option<f64>> {
    (0..valid.n_outcomes())
        .map(|k| {
            let beta = coefficients.column(k);
            let out = &valid.outcomes()[k];
            let score = match criterion {
                TuningCriterion::MeanCIndex => {
                    let risk = valid.covariates() * &beta;
                    harrell_c_index(&out.time, &out.event, risk.as_slice())
                }
                TuningCriterion::ValidationLikelihood => {
                    neg_log_partial_likelihood(valid, k, &beta).map(|v| -v)
                }
            };
            score.ok().filter(|s| s.is_finite())
        })
        .collect()
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Picks hyperparameters for `method` by cross-validation over `inner` on
/// `train`, then refits on all of `train`. Ties keep the earliest grid point.
pub fn tune_and_fit(
    method: Method,
    ctx: &FitContext<'_>,
    train: &SurvivalDataset,
    inner: &FoldAssignment,
    criterion: TuningCriterion,
) -> Result<TunedFit> {
    let grid = candidates(method, ctx.grid, train.n_predictors(), train.n_outcomes());
    if grid.is_empty() {
        return Err(CoxError::Config(format!("{method} has an empty hyperparameter grid")));
    }
    if grid.len() == 1 {
        let hp = grid.into_iter().next().expect("one candidate");
        let fit = fit_method(method, &hp, ctx, train)?;
        return Ok(TunedFit { hyperparameters: hp, fit, inner_score: None });
    }

    let k = train.n_outcomes();
    // scores[candidate][outcome] collects one entry per inner fold that could score it.
    let mut scores: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); k]; grid.len()];
    let mut fitted = vec![false; grid.len()];
    for fold in 0..inner.n_folds {
        let fold_train = train.select_rows(&inner.train_rows(fold))?;
        let fold_valid = train.select_rows(&inner.test_rows(fold))?;
        for (c, hp) in grid.iter().enumerate() {
            match fit_method(method, hp, ctx, &fold_train) {
                Ok(fit) => {
                    fitted[c] = true;
                    for (kk, s) in outcome_scores(&fit.coefficients, &fold_valid, criterion).into_iter().enumerate() {
                        if let Some(s) = s {
                            scores[c][kk].push(s);
                        }
                    }
                }
                Err(e) => warn!("{method} [{hp}] failed in inner fold {fold}: {e}"),
            }
        }
    }
    let outcome_mean = |c: usize, kk: usize| mean_of(scores[c][kk].iter().copied());

    let (hp, inner_score) = if method == Method::CoreCox && ctx.grid.per_outcome_residual {
        // Group by Stage-1 setting; choose each outcome's residual strength separately.
        let mut groups: BTreeMap<(usize, u64), Vec<usize>> = BTreeMap::new();
        for (c, hp) in grid.iter().enumerate() {
            let key = (hp.rank.unwrap_or(0), hp.factor_lambda.unwrap_or(0.0).to_bits());
            groups.entry(key).or_default().push(c);
        }
        let mut order: Vec<Vec<usize>> = groups.into_values().collect();
        order.sort_by_key(|members| members[0]);
        let mut best: Option<(Hyperparameters, f64)> = None;
        for members in order {
            let mut lambdas = Vec::with_capacity(k);
            let mut per_outcome = Vec::with_capacity(k);
            for kk in 0..k {
                let choice = members
                    .iter()
                    .filter(|&&c| fitted[c])
                    .filter_map(|&c| outcome_mean(c, kk).map(|s| (c, s)))
                    .fold(None::<(usize, f64)>, |acc, (c, s)| match acc {
                        Some((_, bs)) if bs >= s => acc,
                        _ => Some((c, s)),
                    });
                let fallback = members.iter().copied().find(|&c| fitted[c]);
                match (choice, fallback) {
                    (Some((c, s)), _) => {
                        lambdas.push(grid[c].residual_lambda.unwrap_or(0.0));
                        per_outcome.push(s);
                    }
                    (None, Some(c)) => lambdas.push(grid[c].residual_lambda.unwrap_or(0.0)),
                    (None, None) => break,
                }
            }
            if lambdas.len() < k {
                continue;
            }
            let Some(score) = mean_of(per_outcome.into_iter()) else { continue };
            if best.as_ref().is_none_or(|(_, b)| score > *b) {
                let hp = Hyperparameters {
                    rank: grid[members[0]].rank,
                    factor_lambda: grid[members[0]].factor_lambda,
                    residual_lambdas: Some(lambdas),
                    ..Default::default()
                };
                best = Some((hp, score));
            }
        }
        best.ok_or_else(|| CoxError::Fit(format!("{method}: no grid point could be scored")))?
    } else {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..grid.len() {
            if !fitted[c] {
                continue;
            }
            let Some(score) = mean_of((0..k).filter_map(|kk| outcome_mean(c, kk))) else { continue };
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((c, score));
            }
        }
        let (c, score) = best.ok_or_else(|| CoxError::Fit(format!("{method}: no grid point could be scored")))?;
        (grid[c].clone(), score)
    };

    let fit = fit_method(method, &hp, ctx, train)?;
    Ok(TunedFit { hyperparameters: hp, fit, inner_score: Some(inner_score) })
}
