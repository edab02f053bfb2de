//! Discrimination metrics, fold assignment, hyperparameter tuning, the
//! nested cross-validation harness, and bootstrap hazard-ratio intervals.

mod bootstrap;
mod folds;
mod methods;
mod metrics;
mod nested_cv;
mod tuning;

pub use bootstrap::{
    bootstrap_hazard_ratios, bootstrap_replicates, percentile_intervals, BootstrapOptions, HazardRatioRow,
    MAX_FAILED_FRACTION,
};
pub use folds::{assign_folds, CVPlan, FoldAssignment};
pub use methods::{
    candidates, default_lambda_grid, fit_method, FitContext, HyperGrid, Hyperparameters, Method, MethodFit,
    SourceCache,
};
pub use metrics::{harrell_c_index, top_count, top_k_lift};
pub use nested_cv::{held_out_metrics, run_nested_cv, MethodResult, NestedCvOptions, NestedCvReport, UnitFailure};
pub use tuning::{outcome_scores, tune_and_fit, TunedFit, TuningCriterion};
