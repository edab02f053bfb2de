use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::evaluation::folds::{CVPlan, FoldAssignment};
use crate::evaluation::methods::{FitContext, HyperGrid, Hyperparameters, Method, SourceCache};
use crate::evaluation::metrics::{harrell_c_index, top_k_lift};
use crate::evaluation::tuning::{tune_and_fit, TuningCriterion};
use crate::survival::{CoefficientMatrix, SurvivalDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NestedCvOptions {
    /// Fraction of highest-risk subjects used by the lift metric.
    pub lift_fraction: f64,
    pub criterion: TuningCriterion,
}

impl Default for NestedCvOptions {
    fn default() -> Self {
        Self { lift_fraction: 0.15, criterion: TuningCriterion::MeanCIndex }
    }
}

/// Held-out performance of one method on one outer fold of one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub seed: u64,
    pub fold_index: usize,
    pub fold_hash: String,
    /// `None` where the held-out fold has no comparable pairs for that outcome.
    pub per_outcome_cindex: Vec<Option<f64>>,
    pub per_outcome_lift: Vec<Option<f64>>,
    pub chosen_hyperparameters: Hyperparameters,
    #[serde(skip)]
    pub coefficients: CoefficientMatrix,
    pub converged: bool,
}

impl MethodResult {
    pub fn mean_cindex(&self) -> Option<f64> {
        mean_defined(&self.per_outcome_cindex)
    }

    pub fn mean_lift(&self) -> Option<f64> {
        mean_defined(&self.per_outcome_lift)
    }
}

pub(crate) fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// A method/fold unit that could not be fitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitFailure {
    pub method: Method,
    pub seed: u64,
    pub fold_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NestedCvReport {
    /// Ordered by seed, fold, then method.
    pub results: Vec<MethodResult>,
    pub failures: Vec<UnitFailure>,
}

impl NestedCvReport {
    pub fn for_method(&self, method: Method) -> impl Iterator<Item = &MethodResult> {
        self.results.iter().filter(move |r| r.method == method)
    }

    /// Mean over units of the per-unit mean C-index.
    pub fn mean_cindex(&self, method: Method) -> Option<f64> {
        let v: Vec<Option<f64>> = self.for_method(method).map(MethodResult::mean_cindex).collect();
        mean_defined(&v)
    }

    pub fn mean_lift(&self, method: Method) -> Option<f64> {
        let v: Vec<Option<f64>> = self.for_method(method).map(MethodResult::mean_lift).collect();
        mean_defined(&v)
    }
}

/// Held-out C-index and lift per outcome.
pub fn held_out_metrics(
    coefficients: &CoefficientMatrix,
    test: &SurvivalDataset,
    lift_fraction: f64,
) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    (0..test.n_outcomes())
        .map(|k| {
            let risk = test.covariates() * coefficients.column(k);
            let out = &test.outcomes()[k];
            let c = harrell_c_index(&out.time, &out.event, risk.as_slice()).ok();
            let l = top_k_lift(&out.time, &out.event, risk.as_slice(), lift_fraction).ok().filter(|v| v.is_finite());
            (c, l)
        })
        .unzip()
}

struct Unit<'a> {
    seed: u64,
    fold: usize,
    method: Method,
    outer: &'a FoldAssignment,
    plan: &'a CVPlan,
}

/// Nested cross-validation over the target cohort for every seed. For each
/// seed the outer folds are drawn from that seed, every method is tuned by an
/// inner split of the outer-training rows only, refitted, and scored on the
/// held-out fold. Source fits are computed once and shared by every unit.
pub fn run_nested_cv(
    source: Option<&SurvivalDataset>,
    target: &SurvivalDataset,
    methods: &[Method],
    grid: &HyperGrid,
    plan: &CVPlan,
    seeds: &[u64],
    options: &NestedCvOptions,
) -> Result<NestedCvReport> {
    plan.validate()?;
    grid.validate()?;
    if methods.is_empty() || seeds.is_empty() {
        return Err(CoxError::Config("need at least one method and one seed".into()));
    }
    if !(options.lift_fraction > 0.0 && options.lift_fraction <= 1.0) {
        return Err(CoxError::Config(format!("lift_fraction {} outside (0, 1]", options.lift_fraction)));
    }
    if let Some(src) = source {
        if !src.same_schema(target) {
            return Err(CoxError::Schema("source and target schemas differ".into()));
        }
    }
    let cache = SourceCache::build(source, methods, grid)?;
    info!("source cache ready ({} low-rank fits)", cache.len());
    let ctx = FitContext { source, cache: &cache, grid };

    let plans: Vec<CVPlan> = seeds.iter().map(|&s| plan.with_seed(s)).collect();
    let outers: Vec<FoldAssignment> = plans.iter().map(|p| p.outer_assignment(target)).collect::<Result<_>>()?;
    let mut units = Vec::new();
    for (si, &seed) in seeds.iter().enumerate() {
        for fold in 0..plan.outer_folds {
            for &method in methods {
                units.push(Unit { seed, fold, method, outer: &outers[si], plan: &plans[si] });
            }
        }
    }

    let outcomes: Vec<std::result::Result<MethodResult, UnitFailure>> = units
        .par_iter()
        .map(|u| {
            run_unit(u, &ctx, target, options).map_err(|e| {
                warn!("{} seed {} fold {} failed: {e}", u.method, u.seed, u.fold);
                UnitFailure { method: u.method, seed: u.seed, fold_index: u.fold, message: e.to_string() }
            })
        })
        .collect();
    let mut report = NestedCvReport::default();
    for o in outcomes {
        match o {
            Ok(r) => report.results.push(r),
            Err(f) => report.failures.push(f),
        }
    }
    Ok(report)
}

fn run_unit(u: &Unit<'_>, ctx: &FitContext<'_>, target: &SurvivalDataset, options: &NestedCvOptions) -> Result<MethodResult> {
    let train = target.select_rows(&u.outer.train_rows(u.fold))?;
    let test = target.select_rows(&u.outer.test_rows(u.fold))?;
    let inner = u.plan.inner_assignment(&train, u.fold)?;
    let tuned = tune_and_fit(u.method, ctx, &train, &inner, options.criterion)?;
    let (per_outcome_cindex, per_outcome_lift) = held_out_metrics(&tuned.fit.coefficients, &test, options.lift_fraction);
    Ok(MethodResult {
        method: u.method,
        seed: u.seed,
        fold_index: u.fold,
        fold_hash: u.outer.fold_hash(u.fold),
        per_outcome_cindex,
        per_outcome_lift,
        chosen_hyperparameters: tuned.hyperparameters,
        coefficients: tuned.fit.coefficients,
        converged: tuned.fit.converged,
    })
}
