//! Percentile bootstrap hazard-ratio intervals for target-only Cox and for
//! CORE-Cox with the source model held fixed.
//!
//! `cargo run --release --example bootstrap_hazard_ratios`

use corecox::estimators::{fit_cox, fit_cox_offset, fit_lowrank_mtl, PenaltySpec};
use corecox::evaluation::{bootstrap_hazard_ratios, BootstrapOptions};
use corecox::simulation::{generate, SimConfig};
use corecox::survival::materialize;

fn main() -> corecox::Result<()> {
    let cohorts = generate(&SimConfig { n_source: 5000, ..SimConfig::default() })?;
    let target = &cohorts.target;
    let outcome = 0;
    let options = BootstrapOptions { n_boot: 200, level: 0.95, seed: 11 };

    let stage1 = fit_lowrank_mtl(&cohorts.source, 2, PenaltySpec::l2(1e-3))?;
    let offset = materialize(&stage1.factors).column(outcome);
    let residual = PenaltySpec::l2(0.1);

    let cox = bootstrap_hazard_ratios(|d, k| fit_cox(d, k).map(|f| f.beta), target, outcome, "Cox", &options)?;
    let core = bootstrap_hazard_ratios(
        |d, k| fit_cox_offset(d, k, &offset, residual).map(|f| &offset + f.beta),
        target,
        outcome,
        "CORE-Cox",
        &options,
    )?;
    let truth = cohorts.truth.b_target_true.column(outcome);
    println!("{:<4} {:>7}  {:<26} {:<26}", "", "true HR", "Cox", "CORE-Cox");
    for (j, (a, b)) in cox.iter().zip(&core).enumerate() {
        println!(
            "{:<4} {:>7.3}  {:.3} [{:.3}, {:.3}]      {:.3} [{:.3}, {:.3}]",
            a.predictor,
            truth[j].exp(),
            a.hr,
            a.ci_low,
            a.ci_high,
            b.hr,
            b.ci_low,
            b.ci_high
        );
    }
    Ok(())
}
