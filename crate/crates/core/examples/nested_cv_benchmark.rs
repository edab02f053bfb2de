//! Repeated nested cross-validation of several methods on one simulated
//! source/target pair, with identical outer splits for every method.
//!
//! `cargo run --release --example nested_cv_benchmark -- [seeds] [shift magnitude] [shift sparsity] [methods]`
//!
//! `methods` is a comma-separated list such as `cox,cox-ridge,core-cox`.

use std::time::Instant;

use corecox::evaluation::{run_nested_cv, CVPlan, HyperGrid, Method, NestedCvOptions};
use corecox::simulation::{generate, SimConfig};

fn main() -> corecox::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_seeds: u64 = args.first().and_then(|a| a.parse().ok()).unwrap_or(2);
    let defaults = SimConfig::default();
    let magnitude = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(defaults.shift_magnitude);
    let sparsity = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(defaults.shift_sparsity);
    let methods: Vec<Method> = match args.get(3) {
        Some(list) => list.split(',').map(str::parse).collect::<corecox::Result<_>>()?,
        None => vec![Method::Cox, Method::CoxRidge, Method::LrMtlSource, Method::CoreCox],
    };

    let config = SimConfig { shift_magnitude: magnitude, shift_sparsity: sparsity, ..defaults };
    let cohorts = generate(&config)?;
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let start = Instant::now();
    let report = run_nested_cv(
        Some(&cohorts.source),
        &cohorts.target,
        &methods,
        &HyperGrid::default(),
        &CVPlan::default(),
        &seeds,
        &NestedCvOptions::default(),
    )?;
    for &m in &methods {
        println!(
            "{:<14} C-index {:.4}  lift {:.3}",
            m,
            report.mean_cindex(m).unwrap_or(f64::NAN),
            report.mean_lift(m).unwrap_or(f64::NAN)
        );
    }
    println!("{} failed units; elapsed {:.1?}", report.failures.len(), start.elapsed());
    Ok(())
}
