use log::warn;
use nalgebra::DVector;

use super::penalty::{FitReport, PenaltySpec};
use super::solver::{newton, proximal_gradient, SolverOptions};
use crate::error::{CoxError, Result};
use crate::survival::{CoxProblem, SurvivalDataset};

/// Any coefficient larger than this in magnitude aborts a fit as divergent.
pub const DIVERGENCE_LIMIT: f64 = 50.0;

/// Newton is used for unpenalized fits up to this many predictors.
const NEWTON_MAX_PREDICTORS: usize = 50;

const PROX_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub beta: DVector<f64>,
    pub report: FitReport,
}

fn check_outcome(data: &SurvivalDataset, outcome_index: usize) -> Result<()> {
    let events = data.outcome(outcome_index)?.event_count();
    match events {
        0 => Err(CoxError::NoEvents(outcome_index)),
        1 => Err(CoxError::InvalidData(format!(
            "outcome {outcome_index} has a single event; at least 2 are needed to fit"
        ))),
        e => {
            if data.n_predictors() >= e {
                warn!(
                    "outcome {} has {e} events for {} predictors",
                    data.outcome_names()[outcome_index],
                    data.n_predictors()
                );
            }
            Ok(())
        }
    }
}

/// Unpenalized Cox regression for one outcome, started at `β = 0`.
///
/// Stops when the gradient max-norm is at most `1e-7` (and, for Newton, the
/// Newton step has vanished) or after 200 iterations. Separation shows up as a
/// non-converged report, either through the divergence guard or a likelihood
/// that keeps improving without a vanishing step.
pub fn fit_cox(data: &SurvivalDataset, outcome_index: usize) -> Result<CoxFit> {
    fit_cox_penalized(data, outcome_index, PenaltySpec::NONE)
}

/// Penalized Cox regression for one outcome, `λ‖β‖₁` or `λ‖β‖₂²/2` added to
/// the event-averaged negative log partial likelihood.
pub fn fit_cox_penalized(
    data: &SurvivalDataset,
    outcome_index: usize,
    penalty: PenaltySpec,
) -> Result<CoxFit> {
    let zero = DVector::zeros(data.n_predictors());
    fit_cox_offset(data, outcome_index, &zero, penalty)
}

/// Fits `θ` in the model with log-hazard coefficients `offset + θ`, penalizing
/// only `θ`. Returns `θ`; the fitted coefficient vector is `offset + θ`.
pub fn fit_cox_offset(
    data: &SurvivalDataset,
    outcome_index: usize,
    offset: &DVector<f64>,
    penalty: PenaltySpec,
) -> Result<CoxFit> {
    penalty.validate()?;
    check_outcome(data, outcome_index)?;
    if offset.len() != data.n_predictors() {
        return Err(CoxError::Dimension(format!(
            "offset has length {}, dataset has {} predictors",
            offset.len(),
            data.n_predictors()
        )));
    }
    if offset.iter().any(|v| !v.is_finite()) {
        return Err(CoxError::NonFinite("offset"));
    }
    let problem = CoxProblem::new(data, outcome_index)?;
    let mut fixed = vec![false; data.n_predictors()];
    for j in data.constant_predictors() {
        fixed[j] = true;
    }
    Ok(solve_offset_problem(&problem, offset.as_slice(), penalty, &fixed))
}

pub(crate) fn solve_offset_problem(
    problem: &CoxProblem,
    offset: &[f64],
    penalty: PenaltySpec,
    fixed: &[bool],
) -> CoxFit {
    let p = problem.n_predictors();
    let shifted = |theta: &[f64]| -> Vec<f64> { theta.iter().zip(offset).map(|(t, o)| t + o).collect() };
    let (theta, report) = if penalty.is_none() && p <= NEWTON_MAX_PREDICTORS {
        newton(
            |t| problem.value(&shifted(t)),
            |t| problem.value_grad_hessian(&shifted(t)),
            vec![0.0; p],
            fixed,
            &SolverOptions::default(),
        )
    } else {
        let mut beta = vec![0.0; p];
        proximal_gradient(
            |t, g| {
                for j in 0..p {
                    beta[j] = t[j] + offset[j];
                }
                problem.value_grad(&beta, g)
            },
            &penalty,
            vec![0.0; p],
            fixed,
            &SolverOptions { max_iter: PROX_MAX_ITER, ..Default::default() },
        )
    };
    CoxFit { beta: DVector::from_vec(theta), report }
}
