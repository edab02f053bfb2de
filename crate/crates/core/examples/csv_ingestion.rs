//! Writes simulated cohorts to CSV, punches holes in the target file, and
//! reads both back with complete-case filtering and source-scale
//! standardization.
//!
//! `cargo run --example csv_ingestion`

use corecox::cli::{ingest_pair, validate_data, write_cohort_csv};
use corecox::simulation::{generate, SimConfig};

fn main() -> corecox::Result<()> {
    let dir = std::env::temp_dir().join("corecox-csv-example");
    std::fs::create_dir_all(&dir)?;
    let cohorts = generate(&SimConfig { n_source: 500, n_target: 120, ..SimConfig::default() })?;
    let ids = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i:04}")).collect::<Vec<_>>();
    let source = dir.join("source.csv");
    let target = dir.join("target.csv");
    write_cohort_csv(&source, &ids("s", 500), &cohorts.source)?;
    write_cohort_csv(&target, &ids("t", 120), &cohorts.target)?;

    // Blank out x3 on every tenth target row.
    let text = std::fs::read_to_string(&target)?;
    let holed: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            if i > 0 && i % 10 == 0 {
                let mut cells: Vec<&str> = line.split(',').collect();
                cells[3] = "NA";
                cells.join(",")
            } else {
                line.to_string()
            }
        })
        .collect();
    std::fs::write(&target, holed.join("\n") + "\n")?;

    print!("{}", validate_data(&source, &target)?);
    let pair = ingest_pair(Some(&source), &target, false)?;
    println!(
        "target kept {} of {} rows; standardized with source means {:.3?}",
        pair.target.report.rows_kept, pair.target.report.rows_read, pair.standardizer.mean
    );
    Ok(())
}
