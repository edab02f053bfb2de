use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::estimators::{
    fit_cox_penalized, fit_lowrank_mtl, fit_lowrank_mtl_from, pool_datasets, LowRankFit, PenaltyKind,
    PenaltySpec,
};
use crate::survival::{materialize, CoefficientMatrix, SurvivalDataset};
use crate::transfer::{
    adapt_single_outcome, direct_transfer, fit_residual_stage, fit_residual_stage_per_outcome,
    TransferFit, COX_TRANSFER_SOURCE_RIDGE,
};

/// The eight compared estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "Cox")]
    Cox,
    #[serde(rename = "Cox-Lasso")]
    CoxLasso,
    #[serde(rename = "Cox-Ridge")]
    CoxRidge,
    #[serde(rename = "LR-MTL-Target")]
    LrMtlTarget,
    #[serde(rename = "LR-MTL-Source")]
    LrMtlSource,
    #[serde(rename = "LR-MTL-Both")]
    LrMtlBoth,
    #[serde(rename = "Cox-Transfer")]
    CoxTransfer,
    #[serde(rename = "CORE-Cox")]
    CoreCox,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Cox,
        Method::CoxLasso,
        Method::CoxRidge,
        Method::LrMtlTarget,
        Method::LrMtlSource,
        Method::LrMtlBoth,
        Method::CoxTransfer,
        Method::CoreCox,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Cox => "Cox",
            Method::CoxLasso => "Cox-Lasso",
            Method::CoxRidge => "Cox-Ridge",
            Method::LrMtlTarget => "LR-MTL-Target",
            Method::LrMtlSource => "LR-MTL-Source",
            Method::LrMtlBoth => "LR-MTL-Both",
            Method::CoxTransfer => "Cox-Transfer",
            Method::CoreCox => "CORE-Cox",
        }
    }

    pub fn uses_source(&self) -> bool {
        matches!(self, Method::LrMtlSource | Method::LrMtlBoth | Method::CoxTransfer | Method::CoreCox)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = CoxError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = |x: &str| x.to_ascii_lowercase().replace(['-', '_', ' '], "");
        Method::ALL
            .into_iter()
            .find(|m| norm(m.name()) == norm(s))
            .ok_or_else(|| CoxError::Config(format!("unknown method {s:?}")))
    }
}

/// Seven-point log-spaced grid from 1e-3 to 1e1.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..7).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 6.0)).collect()
}

/// Hyperparameter grids for every tunable method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    /// Low-rank dimensions; empty means `{1, 2, 3, min(p, K)}`.
    pub ranks: Vec<usize>,
    /// Cox-Lasso and Cox-Ridge strengths.
    pub penalty_lambdas: Vec<f64>,
    /// Frobenius penalty on the low-rank factors of the LR-MTL methods.
    pub factor_lambdas: Vec<f64>,
    /// Fixed factor penalty of the CORE-Cox source stage, which is tuned over
    /// rank and residual strength only.
    pub source_factor_lambda: f64,
    /// Residual penalty for CORE-Cox and Cox-Transfer.
    pub residual_lambdas: Vec<f64>,
    pub residual_kind: PenaltyKind,
    /// Tune one residual strength per outcome instead of a shared one.
    pub per_outcome_residual: bool,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            ranks: Vec::new(),
            penalty_lambdas: default_lambda_grid(),
            factor_lambdas: default_lambda_grid(),
            source_factor_lambda: 1e-3,
            residual_lambdas: default_lambda_grid(),
            residual_kind: PenaltyKind::L1,
            per_outcome_residual: false,
        }
    }
}

impl HyperGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("penalty_lambdas", &self.penalty_lambdas),
            ("factor_lambdas", &self.factor_lambdas),
            ("residual_lambdas", &self.residual_lambdas),
        ] {
            if grid.is_empty() {
                return Err(CoxError::Config(format!("{name} must not be empty")));
            }
            if grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
                return Err(CoxError::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if !self.source_factor_lambda.is_finite() || self.source_factor_lambda < 0.0 {
            return Err(CoxError::Config("source_factor_lambda must be finite and non-negative".into()));
        }
        if self.residual_kind == PenaltyKind::None {
            return Err(CoxError::Config("residual_kind must be l1 or l2".into()));
        }
        if self.ranks.contains(&0) {
            return Err(CoxError::Config("ranks must be positive".into()));
        }
        Ok(())
    }

    pub fn resolved_ranks(&self, p: usize, k: usize) -> Vec<usize> {
        let max = p.min(k);
        let mut ranks: Vec<usize> = if self.ranks.is_empty() { vec![1, 2, 3, max] } else { self.ranks.clone() };
        ranks.retain(|r| *r >= 1 && *r <= max);
        ranks.sort_unstable();
        ranks.dedup();
        ranks
    }

    pub fn residual_penalty(&self, lambda: f64) -> PenaltySpec {
        PenaltySpec { kind: self.residual_kind, lambda }
    }
}

/// One point of a method's hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_lambdas: Option<Vec<f64>>,
}

impl fmt::Display for Hyperparameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(r) = self.rank {
            parts.push(format!("rank={r}"));
        }
        if let Some(l) = self.lambda {
            parts.push(format!("lambda={l}"));
        }
        if let Some(l) = self.factor_lambda {
            parts.push(format!("factor_lambda={l}"));
        }
        if let Some(l) = self.residual_lambda {
            parts.push(format!("residual_lambda={l}"));
        }
        if let Some(ls) = &self.residual_lambdas {
            let s: Vec<String> = ls.iter().map(|l| l.to_string()).collect();
            parts.push(format!("residual_lambdas={}", s.join("|")));
        }
        f.write_str(&parts.join(";"))
    }
}

/// Every grid point of `method` for a problem with `p` predictors and `k` outcomes.
pub fn candidates(method: Method, grid: &HyperGrid, p: usize, k: usize) -> Vec<Hyperparameters> {
    let ranks = grid.resolved_ranks(p, k);
    let lowrank = || {
        ranks.iter().flat_map(|&r| {
            grid.factor_lambdas.iter().map(move |&fl| Hyperparameters {
                rank: Some(r),
                factor_lambda: Some(fl),
                ..Default::default()
            })
        })
    };
    match method {
        Method::Cox => vec![Hyperparameters::default()],
        Method::CoxLasso | Method::CoxRidge => grid
            .penalty_lambdas
            .iter()
            .map(|&l| Hyperparameters { lambda: Some(l), ..Default::default() })
            .collect(),
        Method::LrMtlTarget | Method::LrMtlSource | Method::LrMtlBoth => lowrank().collect(),
        Method::CoxTransfer => grid
            .residual_lambdas
            .iter()
            .map(|&l| Hyperparameters { residual_lambda: Some(l), ..Default::default() })
            .collect(),
        Method::CoreCox => ranks
            .iter()
            .flat_map(|&r| {
                grid.residual_lambdas.iter().map(move |&rl| Hyperparameters {
                    rank: Some(r),
                    factor_lambda: Some(grid.source_factor_lambda),
                    residual_lambda: Some(rl),
                    ..Default::default()
                })
            })
            .collect(),
    }
}

type FactorKey = (usize, u64);

fn factor_key(rank: usize, lambda: f64) -> FactorKey {
    (rank, lambda.to_bits())
}

/// Source-cohort fits that do not depend on the target split: low-rank
/// factors per `(rank, factor λ)` and Cox-Transfer's per-outcome source
/// coefficients. Built once, then shared read-only by every fold.
#[derive(Debug, Default)]
pub struct SourceCache {
    lowrank: HashMap<FactorKey, LowRankFit>,
    single_outcome: Option<Vec<DVector<f64>>>,
}

impl SourceCache {
    pub fn build(
        source: Option<&SurvivalDataset>,
        methods: &[Method],
        grid: &HyperGrid,
    ) -> Result<Self> {
        let Some(source) = source else {
            if let Some(m) = methods.iter().find(|m| m.uses_source()) {
                return Err(CoxError::Config(format!("{m} needs a source cohort")));
            }
            return Ok(Self::default());
        };
        let (p, k) = (source.n_predictors(), source.n_outcomes());
        let mut keys: Vec<(usize, f64)> = Vec::new();
        for r in grid.resolved_ranks(p, k) {
            if methods.iter().any(|m| matches!(m, Method::LrMtlSource | Method::LrMtlBoth)) {
                keys.extend(grid.factor_lambdas.iter().map(|&fl| (r, fl)));
            }
            if methods.contains(&Method::CoreCox) {
                keys.push((r, grid.source_factor_lambda));
            }
        }
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        keys.dedup_by(|a, b| a.0 == b.0 && a.1.to_bits() == b.1.to_bits());
        let fits: Vec<(FactorKey, LowRankFit)> = keys
            .par_iter()
            .map(|&(r, fl)| Ok((factor_key(r, fl), fit_lowrank_mtl(source, r, PenaltySpec::l2(fl))?)))
            .collect::<Result<_>>()?;
        let single_outcome = if methods.contains(&Method::CoxTransfer) {
            Some(
                (0..k)
                    .into_par_iter()
                    .map(|kk| {
                        fit_cox_penalized(source, kk, PenaltySpec::l2(COX_TRANSFER_SOURCE_RIDGE)).map(|f| f.beta)
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self { lowrank: fits.into_iter().collect(), single_outcome })
    }

    pub fn lowrank(&self, rank: usize, factor_lambda: f64) -> Option<&LowRankFit> {
        self.lowrank.get(&factor_key(rank, factor_lambda))
    }

    pub fn len(&self) -> usize {
        self.lowrank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowrank.is_empty() && self.single_outcome.is_none()
    }
}

/// Data available to a fit: the fixed source cohort and its cached fits.
#[derive(Clone, Copy)]
pub struct FitContext<'a> {
    pub source: Option<&'a SurvivalDataset>,
    pub cache: &'a SourceCache,
    pub grid: &'a HyperGrid,
}

#[derive(Debug, Clone)]
pub struct MethodFit {
    pub coefficients: CoefficientMatrix,
    pub converged: bool,
    /// Two-stage decomposition, for CORE-Cox.
    pub transfer: Option<TransferFit>,
}

fn require<T>(value: Option<T>, what: &str, method: Method) -> Result<T> {
    value.ok_or_else(|| CoxError::Config(format!("{method} requires {what}")))
}

/// Fits `method` at `hp` on target training data `train`.
pub fn fit_method(
    method: Method,
    hp: &Hyperparameters,
    ctx: &FitContext<'_>,
    train: &SurvivalDataset,
) -> Result<MethodFit> {
    let source = || require(ctx.source, "a source cohort", method);
    let source_factors = |rank: usize, fl: f64| -> Result<std::borrow::Cow<'_, LowRankFit>> {
        match ctx.cache.lowrank(rank, fl) {
            Some(f) => Ok(std::borrow::Cow::Borrowed(f)),
            None => Ok(std::borrow::Cow::Owned(fit_lowrank_mtl(source()?, rank, PenaltySpec::l2(fl))?)),
        }
    };
    let per_outcome = |penalty: PenaltySpec| -> Result<MethodFit> {
        let fits = (0..train.n_outcomes())
            .map(|k| fit_cox_penalized(train, k, penalty))
            .collect::<Result<Vec<_>>>()?;
        let converged = fits.iter().all(|f| f.report.converged);
        let cols: Vec<DVector<f64>> = fits.into_iter().map(|f| f.beta).collect();
        Ok(MethodFit { coefficients: CoefficientMatrix::from_columns(train, &cols)?, converged, transfer: None })
    };

    match method {
        Method::Cox => per_outcome(PenaltySpec::NONE),
        Method::CoxLasso => per_outcome(PenaltySpec::l1(require(hp.lambda, "lambda", method)?)),
        Method::CoxRidge => per_outcome(PenaltySpec::l2(require(hp.lambda, "lambda", method)?)),
        Method::LrMtlTarget => {
            let rank = require(hp.rank, "rank", method)?;
            let fl = require(hp.factor_lambda, "factor_lambda", method)?;
            let fit = fit_lowrank_mtl(train, rank, PenaltySpec::l2(fl))?;
            Ok(MethodFit { coefficients: materialize(&fit.factors), converged: fit.report.converged, transfer: None })
        }
        Method::LrMtlSource => {
            let rank = require(hp.rank, "rank", method)?;
            let fl = require(hp.factor_lambda, "factor_lambda", method)?;
            let fit = source_factors(rank, fl)?;
            Ok(MethodFit { coefficients: direct_transfer(&fit.factors), converged: fit.report.converged, transfer: None })
        }
        Method::LrMtlBoth => {
            let rank = require(hp.rank, "rank", method)?;
            let fl = require(hp.factor_lambda, "factor_lambda", method)?;
            let pooled = pool_datasets(source()?, train)?;
            let warm = ctx.cache.lowrank(rank, fl).map(|f| &f.factors);
            let fit = fit_lowrank_mtl_from(&pooled, rank, PenaltySpec::l2(fl), warm)?;
            Ok(MethodFit { coefficients: materialize(&fit.factors), converged: fit.report.converged, transfer: None })
        }
        Method::CoxTransfer => {
            let rl = require(hp.residual_lambda, "residual_lambda", method)?;
            let src = source()?;
            let penalty = ctx.grid.residual_penalty(rl);
            let mut converged = true;
            let cols = (0..train.n_outcomes())
                .map(|k| {
                    let beta = match &ctx.cache.single_outcome {
                        Some(b) => b[k].clone(),
                        None => fit_cox_penalized(src, k, PenaltySpec::l2(COX_TRANSFER_SOURCE_RIDGE))?.beta,
                    };
                    let fit = adapt_single_outcome(&beta, train, k, penalty)?;
                    converged &= fit.report.converged;
                    Ok(fit.beta)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MethodFit { coefficients: CoefficientMatrix::from_columns(train, &cols)?, converged, transfer: None })
        }
        Method::CoreCox => {
            let rank = require(hp.rank, "rank", method)?;
            let fl = require(hp.factor_lambda, "factor_lambda", method)?;
            let stage1 = source_factors(rank, fl).map_err(|e| e.in_stage(1, "source low-rank fit"))?;
            let fit = match &hp.residual_lambdas {
                Some(ls) => {
                    let penalties: Vec<PenaltySpec> = ls.iter().map(|&l| ctx.grid.residual_penalty(l)).collect();
                    fit_residual_stage_per_outcome(&stage1, train, &penalties)?
                }
                None => {
                    let rl = require(hp.residual_lambda, "residual_lambda", method)?;
                    fit_residual_stage(&stage1, train, ctx.grid.residual_penalty(rl))?
                }
            };
            Ok(MethodFit { coefficients: fit.target_matrix.clone(), converged: fit.converged(), transfer: Some(fit) })
        }
    }
}
