//! Two-stage transfer: a low-rank multi-task fit on the source cohort,
//! then a penalized residual correction estimated on the target cohort only.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{CoxError, Result};
use crate::estimators::{
    fit_cox_offset, fit_cox_penalized, fit_lowrank_mtl, CoxFit, FitReport, LowRankFit, PenaltySpec,
};
use crate::survival::{materialize, CoefficientMatrix, LowRankFactors, SurvivalDataset};

/// Ridge strength for the single-outcome source fit inside Cox-Transfer; keeps
/// the source estimate finite when an outcome is separated.
pub const COX_TRANSFER_SOURCE_RIDGE: f64 = 1e-4;

/// Result of a two-stage fit. `target_matrix` is computed as
/// `source_matrix + residual` and never adjusted afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFit {
    pub source_matrix: CoefficientMatrix,
    pub residual: DMatrix<f64>,
    pub target_matrix: CoefficientMatrix,
    pub rank_used: usize,
    pub residual_penalty: PenaltySpec,
    pub source_report: FitReport,
    /// One Stage-2 report per outcome.
    pub residual_reports: Vec<FitReport>,
}

impl TransferFit {
    pub fn converged(&self) -> bool {
        self.source_report.converged && self.residual_reports.iter().all(|r| r.converged)
    }
}

fn check_schema(source: &SurvivalDataset, target: &SurvivalDataset) -> Result<()> {
    if !source.same_schema(target) {
        return Err(CoxError::Schema(
            "source and target must share predictor and outcome names in the same order".into(),
        ));
    }
    Ok(())
}

/// Full two-stage fit with one residual penalty shared by all outcomes.
pub fn fit_core_cox(
    source: &SurvivalDataset,
    target: &SurvivalDataset,
    rank: usize,
    factor_penalty: PenaltySpec,
    residual_penalty: PenaltySpec,
) -> Result<TransferFit> {
    check_schema(source, target)?;
    let stage1 = fit_lowrank_mtl(source, rank, factor_penalty).map_err(|e| e.in_stage(1, "source low-rank fit"))?;
    fit_residual_stage(&stage1, target, residual_penalty)
}

/// Stage 2 against an already fitted (and frozen) source model.
pub fn fit_residual_stage(
    stage1: &LowRankFit,
    target: &SurvivalDataset,
    residual_penalty: PenaltySpec,
) -> Result<TransferFit> {
    let penalties = vec![residual_penalty; target.n_outcomes()];
    fit_residual_stage_per_outcome(stage1, target, &penalties)
}

/// Stage 2 with a separate residual penalty for each outcome.
pub fn fit_residual_stage_per_outcome(
    stage1: &LowRankFit,
    target: &SurvivalDataset,
    penalties: &[PenaltySpec],
) -> Result<TransferFit> {
    let source_matrix = materialize(&stage1.factors);
    if source_matrix.predictor_names != target.predictor_names()
        || source_matrix.outcome_names != target.outcome_names()
    {
        return Err(CoxError::Schema("source model and target data disagree on names".into()));
    }
    if penalties.len() != target.n_outcomes() {
        return Err(CoxError::Dimension(format!(
            "{} residual penalties for {} outcomes",
            penalties.len(),
            target.n_outcomes()
        )));
    }
    // Columns of the residual decouple given the frozen source matrix.
    let columns: Vec<CoxFit> = (0..target.n_outcomes())
        .into_par_iter()
        .map(|k| {
            fit_cox_offset(target, k, &source_matrix.column(k), penalties[k])
                .map_err(|e| e.in_stage(2, format!("residual for outcome {}", target.outcome_names()[k])))
        })
        .collect::<Result<_>>()?;

    let residual = DMatrix::from_columns(&columns.iter().map(|c| c.beta.clone()).collect::<Vec<_>>());
    let target_values = &source_matrix.values + &residual;
    let target_matrix = CoefficientMatrix::new(
        target_values,
        source_matrix.predictor_names.clone(),
        source_matrix.outcome_names.clone(),
    )?;
    Ok(TransferFit {
        rank_used: stage1.factors.rank(),
        residual_penalty: penalties[0],
        source_report: stage1.report.clone(),
        residual_reports: columns.into_iter().map(|c| c.report).collect(),
        source_matrix,
        residual,
        target_matrix,
    })
}

/// Single-outcome residual transfer: a lightly ridge-regularized source Cox
/// fit for this outcome alone, then the same residual problem on the target.
/// Returns the target coefficient vector.
pub fn fit_cox_transfer(
    source: &SurvivalDataset,
    target: &SurvivalDataset,
    outcome_index: usize,
    residual_penalty: PenaltySpec,
) -> Result<CoxFit> {
    check_schema(source, target)?;
    let src = fit_cox_penalized(source, outcome_index, PenaltySpec::l2(COX_TRANSFER_SOURCE_RIDGE))?;
    let mut fit = adapt_single_outcome(&src.beta, target, outcome_index, residual_penalty)?;
    if !src.report.converged {
        fit.report.converged = false;
        fit.report.message = Some("source-stage fit did not converge".into());
    }
    Ok(fit)
}

/// Residual step of Cox-Transfer given a source coefficient vector.
pub fn adapt_single_outcome(
    source_beta: &DVector<f64>,
    target: &SurvivalDataset,
    outcome_index: usize,
    residual_penalty: PenaltySpec,
) -> Result<CoxFit> {
    let theta = fit_cox_offset(target, outcome_index, source_beta, residual_penalty)?;
    Ok(CoxFit { beta: source_beta + &theta.beta, report: theta.report })
}

/// Applies a source-only low-rank model to the target unchanged.
pub fn direct_transfer(source_fit: &LowRankFactors) -> CoefficientMatrix {
    materialize(source_fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_cox;
    use crate::survival::{log_risk_scores, OutcomeColumn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cohort(n: usize, b: &DMatrix<f64>, seed: u64) -> SurvivalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, k) = b.shape();
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let eta = &x * b;
        let outcomes = (0..k)
            .map(|kk| {
                let (mut time, mut event) = (Vec::new(), Vec::new());
                for i in 0..n {
                    let t = -rng.random::<f64>().ln() / eta[(i, kk)].exp();
                    let c = -rng.random::<f64>().ln() / 0.3;
                    time.push(t.min(c));
                    event.push(t <= c);
                }
                OutcomeColumn::new(time, event).unwrap()
            })
            .collect();
        SurvivalDataset::unnamed(x, outcomes).unwrap()
    }

    fn truth() -> DMatrix<f64> {
        let u = DMatrix::from_row_slice(4, 1, &[0.6, -0.4, 0.3, 0.1]);
        let v = DMatrix::from_row_slice(3, 1, &[1.0, 0.8, -0.9]);
        u * v.transpose()
    }

    #[test]
    fn full_shrinkage_returns_source() {
        let source = cohort(1500, &truth(), 1);
        let target = cohort(120, &truth(), 2);
        let fit = fit_core_cox(&source, &target, 1, PenaltySpec::l2(0.01), PenaltySpec::l1(1e6)).unwrap();
        assert!(fit.residual.iter().all(|t| *t == 0.0));
        assert_eq!(fit.target_matrix.values, fit.source_matrix.values);
    }

    #[test]
    fn zero_penalty_matches_target_only_cox() {
        let source = cohort(1500, &truth(), 3);
        let target = cohort(150, &truth(), 4);
        let fit = fit_core_cox(&source, &target, 1, PenaltySpec::l2(0.01), PenaltySpec::l1(0.0)).unwrap();
        for k in 0..3 {
            let cox = fit_cox(&target, k).unwrap();
            let col = fit.target_matrix.column(k);
            assert!((col - cox.beta).amax() < 1e-4);
        }
        assert_eq!(fit.target_matrix.values, &fit.source_matrix.values + &fit.residual);
    }

    #[test]
    fn shifted_target_needs_larger_residual() {
        let source = cohort(2000, &truth(), 5);
        let same = cohort(150, &truth(), 6);
        let mut shifted_b = truth();
        shifted_b[(0, 0)] += 0.8;
        shifted_b[(2, 1)] -= 0.8;
        let shifted = cohort(150, &shifted_b, 6);
        let penalty = PenaltySpec::l1(0.02);
        let a = fit_core_cox(&source, &same, 1, PenaltySpec::l2(0.01), penalty).unwrap();
        let b = fit_core_cox(&source, &shifted, 1, PenaltySpec::l2(0.01), penalty).unwrap();
        assert!(a.residual.norm() < b.residual.norm());
    }

    #[test]
    fn residual_norm_shrinks_along_lambda_path() {
        let source = cohort(1500, &truth(), 7);
        let target = cohort(150, &truth(), 8);
        let stage1 = fit_lowrank_mtl(&source, 1, PenaltySpec::l2(0.01)).unwrap();
        let norms: Vec<f64> = [0.0, 0.001, 0.01, 0.05, 0.2]
            .iter()
            .map(|&l| fit_residual_stage(&stage1, &target, PenaltySpec::l1(l)).unwrap().residual.norm())
            .collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-8), "{norms:?}");
    }

    #[test]
    fn stage_one_ignores_target() {
        let source = cohort(800, &truth(), 9);
        let target = cohort(100, &truth(), 10);
        let other = cohort(100, &truth(), 11);
        let a = fit_core_cox(&source, &target, 1, PenaltySpec::l2(0.01), PenaltySpec::l1(0.01)).unwrap();
        let b = fit_core_cox(&source, &other, 1, PenaltySpec::l2(0.01), PenaltySpec::l1(0.01)).unwrap();
        assert_eq!(a.source_matrix, b.source_matrix);
        assert_ne!(a.residual, b.residual);
    }

    #[test]
    fn cox_transfer_limits() {
        let source = cohort(1500, &truth(), 12);
        let target = cohort(150, &truth(), 13);
        let src = fit_cox_penalized(&source, 1, PenaltySpec::l2(COX_TRANSFER_SOURCE_RIDGE)).unwrap();
        let huge = fit_cox_transfer(&source, &target, 1, PenaltySpec::l1(1e6)).unwrap();
        assert_eq!(huge.beta, src.beta);
        let zero = fit_cox_transfer(&source, &target, 1, PenaltySpec::l1(0.0)).unwrap();
        let cox = fit_cox(&target, 1).unwrap();
        assert!((zero.beta - cox.beta).amax() < 1e-4);
    }

    #[test]
    fn single_outcome_core_cox_matches_cox_transfer() {
        let b = DMatrix::from_column_slice(3, 1, &[0.5, -0.3, 0.2]);
        let source = cohort(2000, &b, 14);
        let target = cohort(150, &b, 15);
        let residual = PenaltySpec::l1(0.01);
        let core = fit_core_cox(&source, &target, 1, PenaltySpec::l2(COX_TRANSFER_SOURCE_RIDGE), residual)
            .unwrap();
        let single = fit_cox_transfer(&source, &target, 0, residual).unwrap();
        assert!((core.target_matrix.column(0) - single.beta).amax() < 1e-3);
    }

    #[test]
    fn direct_transfer_is_materialize_and_full_shrinkage_limit() {
        let source = cohort(1000, &truth(), 16);
        let target = cohort(100, &truth(), 17);
        let stage1 = fit_lowrank_mtl(&source, 1, PenaltySpec::l2(0.01)).unwrap();
        let direct = direct_transfer(&stage1.factors);
        assert_eq!(direct, materialize(&stage1.factors));
        let limit = fit_residual_stage(&stage1, &target, PenaltySpec::l1(1e6)).unwrap();
        assert_eq!(limit.target_matrix, direct);
        let scores = log_risk_scores(&target, &direct.column(0)).unwrap();
        assert_eq!(scores, target.covariates() * direct.column(0));
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let source = cohort(200, &truth(), 18);
        let target = cohort(100, &truth(), 19);
        let renamed = target
            .with_covariates(target.covariates().clone(), vec!["a".into(), "b".into(), "c".into(), "d".into()])
            .unwrap();
        assert!(matches!(
            fit_core_cox(&source, &renamed, 1, PenaltySpec::NONE, PenaltySpec::l1(0.1)),
            Err(CoxError::Schema(_))
        ));
    }
}
