use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cli::config::FORMAT_VERSION;
use crate::cli::ingest::Standardizer;
use crate::error::{CoxError, Result};
use crate::estimators::{FitReport, PenaltySpec};
use crate::evaluation::{Hyperparameters, Method, MethodFit};
use crate::survival::CoefficientMatrix;

/// Two-stage parts of a CORE-Cox fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferParts {
    /// Source coefficients from the frozen Stage-1 fit, one vector per outcome.
    pub source_coefficients: Vec<Vec<f64>>,
    /// Target residual, one vector per outcome.
    pub residual: Vec<Vec<f64>>,
    pub rank_used: usize,
    pub residual_penalty: PenaltySpec,
    pub source_report: FitReport,
    pub residual_reports: Vec<FitReport>,
}

/// A fitted model as written by `corecox fit`. Coefficients are stored per
/// outcome on the standardized predictor scale; `standardizer` maps raw
/// predictors onto that scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub method: Method,
    pub predictor_names: Vec<String>,
    pub outcome_names: Vec<String>,
    pub coefficients: Vec<Vec<f64>>,
    pub hyperparameters: Hyperparameters,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferParts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
    pub config_fingerprint: String,
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// Traces are not serialized; dropping them keeps a loaded artifact equal to
/// the one that was written.
fn without_trace(r: &FitReport) -> FitReport {
    FitReport { objective_trace: Vec::new(), ..r.clone() }
}

impl ModelArtifact {
    pub fn new(
        method: Method,
        hyperparameters: Hyperparameters,
        fit: &MethodFit,
        inner_score: Option<f64>,
        standardizer: Option<Standardizer>,
        config_fingerprint: String,
    ) -> Self {
        let transfer = fit.transfer.as_ref().map(|t| TransferParts {
            source_coefficients: columns(&t.source_matrix.values),
            residual: columns(&t.residual),
            rank_used: t.rank_used,
            residual_penalty: t.residual_penalty,
            source_report: without_trace(&t.source_report),
            residual_reports: t.residual_reports.iter().map(without_trace).collect(),
        });
        Self {
            format_version: FORMAT_VERSION,
            method,
            predictor_names: fit.coefficients.predictor_names.clone(),
            outcome_names: fit.coefficients.outcome_names.clone(),
            coefficients: columns(&fit.coefficients.values),
            hyperparameters,
            converged: fit.converged,
            inner_score,
            transfer,
            standardizer,
            config_fingerprint,
        }
    }

    pub fn coefficient_matrix(&self) -> Result<CoefficientMatrix> {
        let p = self.predictor_names.len();
        if self.coefficients.len() != self.outcome_names.len() || self.coefficients.iter().any(|c| c.len() != p) {
            return Err(CoxError::Dimension("artifact coefficients do not match its names".into()));
        }
        let flat: Vec<f64> = self.coefficients.concat();
        CoefficientMatrix::new(
            DMatrix::from_column_slice(p, self.outcome_names.len(), &flat),
            self.predictor_names.clone(),
            self.outcome_names.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: Self = serde_json::from_str(text)?;
        if artifact.format_version != FORMAT_VERSION {
            return Err(CoxError::Config(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                artifact.format_version
            )));
        }
        artifact.coefficient_matrix()?;
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn artifact() -> ModelArtifact {
        let values = DMatrix::from_row_slice(2, 3, &[0.1, -1.0 / 3.0, 1e-300, std::f64::consts::PI, 0.0, -7.25e12]);
        let coefficients = CoefficientMatrix::new(
            values,
            vec!["age".into(), "lab".into()],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let fit = MethodFit { coefficients, converged: true, transfer: None };
        let hp = Hyperparameters { lambda: Some(0.1), ..Default::default() };
        ModelArtifact::new(Method::CoxRidge, hp, &fit, Some(0.71), None, "ab".repeat(32))
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let a = artifact();
        let b = ModelArtifact::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, b);
        let (ma, mb) = (a.coefficient_matrix().unwrap(), b.coefficient_matrix().unwrap());
        for (x, y) in ma.values.iter().zip(mb.values.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(ma.values[(0, 1)], -1.0 / 3.0);
    }

    #[test]
    fn rejects_other_versions_and_bad_shapes() {
        let mut a = artifact();
        a.format_version = 99;
        assert!(ModelArtifact::from_json(&a.to_json().unwrap()).is_err());
        let mut b = artifact();
        b.coefficients[1].pop();
        assert!(ModelArtifact::from_json(&b.to_json().unwrap()).is_err());
    }
}
