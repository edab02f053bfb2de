//! Single-cohort estimators: standard Cox, L1/L2-penalized Cox, and the
//! low-rank multi-task Cox fit.

mod cox;
mod lowrank;
mod penalty;
mod pool;
pub(crate) mod solver;

pub use cox::{fit_cox, fit_cox_offset, fit_cox_penalized, CoxFit, DIVERGENCE_LIMIT};
pub use lowrank::{fit_lowrank_mtl, fit_lowrank_mtl_from, lowrank_objective, LowRankFit};
pub use penalty::{FitReport, PenaltyKind, PenaltySpec};
pub use pool::{pool_datasets, pool_many};
