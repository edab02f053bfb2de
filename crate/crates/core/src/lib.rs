pub mod cli;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod rng;
pub mod simulation;
pub mod survival;
pub mod transfer;

pub use error::{CoxError, Result};
