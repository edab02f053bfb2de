//! Library side of the `corecox` command: JSON experiment configs, CSV
//! ingestion, model artifacts, and the four commands.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod ingest;

pub use artifact::{ModelArtifact, TransferParts};
pub use commands::{
    cmd_benchmark, cmd_fit, cmd_simulate, load_inputs, standardization_policy, summarize_benchmark, validate_data, BenchmarkSummary,
    DataValidation, Inputs, MethodBenchmark, SimulationOutput, Study,
};
pub use config::{BootstrapSettings, CvSettings, DataPaths, ExperimentConfig, FitSettings, FORMAT_VERSION};
pub use ingest::{
    ingest_csv, ingest_pair, read_cohort_csv, write_cohort_csv, Cohort, IngestedCohorts, MissingnessReport,
    RawCohort, Standardizer,
};
