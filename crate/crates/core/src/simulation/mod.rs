//! Synthetic source/target cohorts with a known low-rank coefficient matrix
//! and a sparse source-target shift, plus the coefficient-recovery and
//! bootstrap-coverage studies built on them.

mod generate;
mod studies;

pub use generate::{generate, rrmse, rrmse_per_outcome, Baseline, SimConfig, SimTruth, SimulatedCohorts};
pub use studies::{
    replicate_seed, run_coverage_study, run_recovery_study, tune_on_pilot, CoverageOptions, CoverageReport,
    CoverageRow, CoverageSummary, MethodSummary, RecoveryOptions, RecoveryRow, RecoveryStudy,
    GENERATIVE_ASSUMPTIONS,
};
