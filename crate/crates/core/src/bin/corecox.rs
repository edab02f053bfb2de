use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corecox::cli::{cmd_benchmark, cmd_fit, cmd_simulate, validate_data, ExperimentConfig, Study};
use corecox::evaluation::Method;

#[derive(Parser)]
#[command(name = "corecox", version, about = "Transfer learning for multi-outcome Cox models")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nested cross-validation comparison of the configured methods.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one method on the full target cohort.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coefficient-recovery and bootstrap-coverage studies on simulated data.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = ["recovery", "coverage", "both"])]
        study: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a source and target CSV can be ingested together.
    ValidateData {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
}

fn out_dir(out: Option<PathBuf>, config: &ExperimentConfig) -> corecox::Result<PathBuf> {
    out.or_else(|| config.output_dir.clone())
        .ok_or_else(|| corecox::CoxError::Config("give --out or set output_dir in the config".into()))
}

fn run(cli: Cli) -> corecox::Result<()> {
    let load = |p: &Path| ExperimentConfig::load(p);
    match cli.command {
        Command::Benchmark { config, out } => {
            let config = load(&config)?;
            let out = out_dir(out, &config)?;
            let summary = cmd_benchmark(&config, &out)?;
            for m in &summary.methods {
                let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
                println!(
                    "{:<14} C-index {}  lift {}  completeness {:.2}",
                    m.method,
                    fmt(m.mean_cindex),
                    fmt(m.mean_lift),
                    m.completeness
                );
            }
            println!("results written to {}", out.display());
        }
        Command::Fit { config, method, out } => {
            let config = load(&config)?;
            let out = out_dir(out, &config)?;
            let artifact = cmd_fit(&config, method, &out)?;
            println!("{method} [{}] converged={}", artifact.hyperparameters, artifact.converged);
            println!("results written to {}", out.display());
        }
        Command::Simulate { config, study, out } => {
            let config = load(&config)?;
            let out = out_dir(out, &config)?;
            cmd_simulate(&config, study.parse::<Study>()?, &out)?;
            print!("{}", std::fs::read_to_string(out.join("summary.txt"))?);
        }
        Command::ValidateData { source, target } => {
            print!("{}", validate_data(&source, &target)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
