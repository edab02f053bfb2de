//! Bootstrap coverage and interval width of CORE-Cox and target-only Cox.
//!
//! `cargo run --release --example coverage_study -- [experiments] [bootstrap draws] [censoring]`

use std::time::Instant;

use corecox::simulation::{run_coverage_study, CoverageOptions, SimConfig};

fn main() -> corecox::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let experiments = args.first().and_then(|a| a.parse().ok()).unwrap_or(20);
    let n_boot = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let censoring = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(SimConfig::default().censoring_rate_target);
    let options = CoverageOptions { n_experiments: experiments, n_boot, ..CoverageOptions::default() };
    let config = SimConfig { censoring_rate_target: censoring, ..SimConfig::default() };
    let start = Instant::now();
    let report = run_coverage_study(&config, &options)?;
    println!("CORE-Cox fixed at {}", report.core_cox_hyperparameters);
    for s in &report.summary {
        println!(
            "{:<10} coverage {:.3}  mean width {:.3} (log HR), {:.3} (HR)  over {} intervals",
            s.method, s.coverage, s.mean_width_log, s.mean_width_hr, s.n_intervals
        );
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
