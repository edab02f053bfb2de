//! Low-rank multi-task Cox fit on a source cohort: rank selection by
//! objective value and distance to the true coefficient matrix.
//!
//! `cargo run --release --example lowrank_mtl`

use corecox::estimators::{fit_lowrank_mtl, PenaltySpec};
use corecox::simulation::{generate, rrmse, SimConfig};
use corecox::survival::materialize;

fn main() -> corecox::Result<()> {
    let cohorts = generate(&SimConfig { n_source: 4000, ..SimConfig::default() })?;
    for rank in 1..=4 {
        let fit = fit_lowrank_mtl(&cohorts.source, rank, PenaltySpec::l2(1e-3))?;
        let b = materialize(&fit.factors);
        println!(
            "rank {rank}: objective {:.5}  iterations {:>4}  converged {}  rrmse vs source truth {:.3}",
            fit.report.final_objective,
            fit.report.iterations,
            fit.report.converged,
            rrmse(&b, &cohorts.truth.b_source_true)?
        );
    }
    Ok(())
}
