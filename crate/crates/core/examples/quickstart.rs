//! Simulate a large source and a small target cohort, fit CORE-Cox, and
//! compare held-out discrimination with target-only Cox.
//!
//! `cargo run --release --example quickstart`

use corecox::estimators::{fit_cox, PenaltySpec};
use corecox::evaluation::{assign_folds, harrell_c_index};
use corecox::simulation::{generate, rrmse, SimConfig};
use corecox::survival::{log_risk_scores, CoefficientMatrix};
use corecox::transfer::fit_core_cox;

fn main() -> corecox::Result<()> {
    let config = SimConfig { n_source: 5000, ..SimConfig::default() };
    let cohorts = generate(&config)?;
    println!(
        "source {} subjects, target {} subjects, {} predictors, {} outcomes",
        cohorts.source.n_subjects(),
        cohorts.target.n_subjects(),
        config.p,
        config.k
    );

    let folds = assign_folds(&cohorts.target, 3, 7, true)?;
    let train = cohorts.target.select_rows(&folds.train_rows(0))?;
    let test = cohorts.target.select_rows(&folds.test_rows(0))?;

    let core = fit_core_cox(&cohorts.source, &train, 2, PenaltySpec::l2(1e-3), PenaltySpec::l1(0.05))?;
    let cox_cols = (0..train.n_outcomes())
        .map(|k| fit_cox(&train, k).map(|f| f.beta))
        .collect::<corecox::Result<Vec<_>>>()?;
    let cox = CoefficientMatrix::from_columns(&train, &cox_cols)?;

    println!("{:<8} {:>9} {:>9}", "outcome", "Cox", "CORE-Cox");
    for (k, name) in test.outcome_names().iter().enumerate() {
        let o = &test.outcomes()[k];
        let c = |m: &CoefficientMatrix| -> corecox::Result<f64> {
            let s = log_risk_scores(&test, &m.column(k))?;
            harrell_c_index(&o.time, &o.event, s.as_slice())
        };
        println!("{name:<8} {:>9.4} {:>9.4}", c(&cox)?, c(&core.target_matrix)?);
    }
    let truth = &cohorts.truth.b_target_true;
    println!("RRMSE  Cox {:.3}  CORE-Cox {:.3}", rrmse(&cox, truth)?, rrmse(&core.target_matrix, truth)?);
    Ok(())
}
