//! Lasso and ridge paths for one outcome of a simulated target cohort.
//!
//! `cargo run --release --example penalized_cox`

use corecox::estimators::{fit_cox_penalized, PenaltySpec};
use corecox::evaluation::default_lambda_grid;
use corecox::simulation::{generate, SimConfig};

fn main() -> corecox::Result<()> {
    let cohorts = generate(&SimConfig { n_source: 200, n_target: 400, ..SimConfig::default() })?;
    let data = &cohorts.target;
    println!("true: {:+.2?}", cohorts.truth.b_target_true.column(0).as_slice());
    for lambda in default_lambda_grid() {
        let lasso = fit_cox_penalized(data, 0, PenaltySpec::l1(lambda))?;
        let ridge = fit_cox_penalized(data, 0, PenaltySpec::l2(lambda))?;
        let nonzero = lasso.beta.iter().filter(|b| **b != 0.0).count();
        println!(
            "lambda {lambda:>8.4}  lasso nonzero {nonzero:>2}  lasso |b|1 {:.3}  ridge |b|2 {:.3}",
            lasso.beta.lp_norm(1),
            ridge.beta.norm()
        );
    }
    Ok(())
}
