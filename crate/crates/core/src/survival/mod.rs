//! Domain types and the Cox partial-likelihood kernel shared by every estimator.

mod data;
mod partial_likelihood;

pub(crate) use data::default_names;
pub use data::{CoefficientMatrix, LowRankFactors, OutcomeColumn, SurvivalDataset};
pub use partial_likelihood::{
    log_risk_scores, materialize, neg_log_partial_likelihood, plik_gradient, CoxProblem,
};
