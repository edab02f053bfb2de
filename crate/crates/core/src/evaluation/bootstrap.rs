use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::rng::stream;
use crate::survival::SurvivalDataset;

const TAG_BOOT: u64 = 0x626f_6f74;
/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

/// Hazard ratio with a bootstrap percentile interval, on both scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRatioRow {
    pub predictor: String,
    pub method: String,
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub log_hr: f64,
    pub log_ci_low: f64,
    pub log_ci_high: f64,
}

/// Settings shared by every bootstrap call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub n_boot: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { n_boot: 200, level: 0.95, seed: 0 }
    }
}

impl BootstrapOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_boot < 100 {
            return Err(CoxError::InvalidArgument(format!("n_boot must be at least 100, got {}", self.n_boot)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CoxError::InvalidArgument(format!("level {} outside (0, 1)", self.level)));
        }
        Ok(())
    }
}

/// Linear-interpolation sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Coefficient vectors from `n_boot` subject-level resamples of `data`, with
/// failed replicates dropped. Replicate `b` always draws the same rows for a
/// given seed, regardless of thread count.
pub fn bootstrap_replicates<F>(
    fit_fn: &F,
    data: &SurvivalDataset,
    outcome_index: usize,
    options: &BootstrapOptions,
) -> Result<Vec<DVector<f64>>>
where
    F: Fn(&SurvivalDataset, usize) -> Result<DVector<f64>> + Sync,
{
    options.validate()?;
    let n = data.n_subjects();
    let draws: Vec<Option<DVector<f64>>> = (0..options.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(options.seed, &[TAG_BOOT, outcome_index as u64, b as u64]);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let sample = data.select_rows(&rows).ok()?;
            fit_fn(&sample, outcome_index).ok().filter(|beta| beta.iter().all(|v| v.is_finite()))
        })
        .collect();
    let total = draws.len();
    let kept: Vec<DVector<f64>> = draws.into_iter().flatten().collect();
    let failed = total - kept.len();
    if failed as f64 > MAX_FAILED_FRACTION * total as f64 {
        return Err(CoxError::BootstrapFailure { failed, total });
    }
    Ok(kept)
}

/// Percentile interval per coefficient, widened where needed so that it
/// always contains the point estimate.
pub fn percentile_intervals(point: &DVector<f64>, replicates: &[DVector<f64>], level: f64) -> Vec<(f64, f64)> {
    let alpha = 1.0 - level;
    (0..point.len())
        .map(|j| {
            let mut values: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
            values.sort_by(f64::total_cmp);
            let low = quantile_sorted(&values, alpha / 2.0);
            let high = quantile_sorted(&values, 1.0 - alpha / 2.0);
            (low.min(point[j]), high.max(point[j]))
        })
        .collect()
}

/// Nonparametric bootstrap hazard ratios for one outcome. `fit_fn` maps a
/// resampled target cohort to that outcome's coefficient vector; anything it
/// captures (such as a fitted source model) stays fixed across replicates.
pub fn bootstrap_hazard_ratios<F>(
    fit_fn: F,
    data: &SurvivalDataset,
    outcome_index: usize,
    method: &str,
    options: &BootstrapOptions,
) -> Result<Vec<HazardRatioRow>>
where
    F: Fn(&SurvivalDataset, usize) -> Result<DVector<f64>> + Sync,
{
    data.outcome(outcome_index)?;
    options.validate()?;
    let point = fit_fn(data, outcome_index)?;
    if point.len() != data.n_predictors() {
        return Err(CoxError::Dimension(format!(
            "estimator returned {} coefficients for {} predictors",
            point.len(),
            data.n_predictors()
        )));
    }
    let replicates = bootstrap_replicates(&fit_fn, data, outcome_index, options)?;
    let intervals = percentile_intervals(&point, &replicates, options.level);
    Ok(data
        .predictor_names()
        .iter()
        .zip(intervals)
        .enumerate()
        .map(|(j, (name, (low, high)))| HazardRatioRow {
            predictor: name.clone(),
            method: method.to_string(),
            hr: point[j].exp(),
            ci_low: low.exp(),
            ci_high: high.exp(),
            log_hr: point[j],
            log_ci_low: low,
            log_ci_high: high,
        })
        .collect())
}
