//! Coefficient-recovery study on the default small-target scenario.
//!
//! `cargo run --release --example recovery_study -- [replicates]`

use std::time::Instant;

use corecox::evaluation::Method;
use corecox::simulation::{run_recovery_study, RecoveryOptions, SimConfig};

fn main() -> corecox::Result<()> {
    env_logger::init();
    let replicates = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let options = RecoveryOptions { n_replicates: replicates, ..RecoveryOptions::default() };
    let start = Instant::now();
    let study = run_recovery_study(&SimConfig::default(), &options)?;
    for s in &study.summary {
        println!("{:<14} rrmse {:.4} ± {:.4}  ({} ok, {} failed)", s.method, s.mean, s.standard_error, s.n_ok, s.n_failed);
    }
    for other in [Method::Cox, Method::LrMtlSource] {
        if let Some(w) = study.paired_win_fraction(Method::CoreCox, other) {
            println!("CORE-Cox beats {other} in {:.0}% of replicates", 100.0 * w);
        }
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
