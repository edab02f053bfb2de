use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum CoxError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("outcome {0} has no observed events")]
    NoEvents(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("rank {rank} out of range for p={p}, K={k}")]
    Rank { rank: usize, p: usize, k: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no comparable pairs for the concordance index")]
    NoComparablePairs,
    #[error("bootstrap failed: {failed} of {total} replicates could not be fitted")]
    BootstrapFailure { failed: usize, total: usize },
    #[error("fit failed: {0}")]
    Fit(String),
    /// Failure inside one stage of a two-stage transfer fit.
    #[error("stage {stage} ({part}): {source}")]
    Stage { stage: u8, part: String, source: Box<CoxError> },
    #[error("infeasible simulation setting: {0}")]
    Infeasible(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Ingest { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CoxError {
    pub(crate) fn in_stage(self, stage: u8, part: impl Into<String>) -> Self {
        CoxError::Stage { stage, part: part.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, CoxError>;
