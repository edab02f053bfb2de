use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoxError, Result};
use crate::evaluation::{HyperGrid, Hyperparameters, Method, NestedCvOptions, TuningCriterion};
use crate::simulation::{CoverageOptions, RecoveryOptions, SimConfig};

/// Version stamped into every file this crate writes.
pub const FORMAT_VERSION: u32 = 1;

/// Paths to real cohorts. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub source: Option<PathBuf>,
    pub target: PathBuf,
    /// Standardize each cohort by its own statistics instead of the source's.
    #[serde(default)]
    pub per_cohort_standardization: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub stratify_by_event: bool,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { outer_folds: 5, inner_folds: 4, stratify_by_event: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub n_boot: usize,
    pub level: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self { n_boot: 200, level: 0.95 }
    }
}

/// Settings of the `fit` command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    /// Fixed hyperparameters; when absent they are tuned by inner
    /// cross-validation on the target with the first seed.
    pub hyperparameters: Option<Hyperparameters>,
    /// Also write bootstrap hazard-ratio intervals.
    pub hazard_ratios: bool,
}

/// Everything that determines a run. Serialized form is JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<DataPaths>,
    pub simulation: Option<SimConfig>,
    pub methods: Vec<Method>,
    pub grid: HyperGrid,
    pub cv: CvSettings,
    pub seeds: Vec<u64>,
    pub lift_fraction: f64,
    pub criterion: TuningCriterion,
    pub bootstrap: BootstrapSettings,
    pub fit: FitSettings,
    pub recovery: RecoveryOptions,
    pub coverage: CoverageOptions,
    /// Default output directory; `--out` takes precedence. Not part of the
    /// fingerprint, since it does not affect results.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            simulation: None,
            methods: Method::ALL.to_vec(),
            grid: HyperGrid::default(),
            cv: CvSettings::default(),
            seeds: vec![0],
            lift_fraction: NestedCvOptions::default().lift_fraction,
            criterion: TuningCriterion::MeanCIndex,
            bootstrap: BootstrapSettings::default(),
            fit: FitSettings::default(),
            recovery: RecoveryOptions::default(),
            coverage: CoverageOptions::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config, resolving relative data paths against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoxError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(data) = &mut config.data {
            data.target = base.join(&data.target);
            data.source = data.source.as_ref().map(|s| base.join(s));
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.simulation) {
            (Some(_), Some(_)) => return Err(CoxError::Config("give either data or simulation, not both".into())),
            (None, None) => return Err(CoxError::Config("give data paths or a simulation".into())),
            (None, Some(sim)) => sim.validate()?,
            (Some(_), None) => {}
        }
        if self.methods.is_empty() {
            return Err(CoxError::Config("methods must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(CoxError::Config("seeds must not be empty".into()));
        }
        self.grid.validate()?;
        if self.cv.outer_folds < 2 || self.cv.inner_folds < 2 {
            return Err(CoxError::Config("outer_folds and inner_folds must be at least 2".into()));
        }
        if !(self.lift_fraction > 0.0 && self.lift_fraction < 1.0) {
            return Err(CoxError::Config("lift_fraction must lie in (0, 1)".into()));
        }
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) || self.bootstrap.n_boot < 100 {
            return Err(CoxError::Config("bootstrap needs n_boot >= 100 and level in (0, 1)".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form: object keys sorted, no
    /// whitespace, output directory excluded. Key order in the source file
    /// therefore does not matter.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        // serde_json's default map is ordered by key.
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn nested_cv_options(&self) -> NestedCvOptions {
        NestedCvOptions { lift_fraction: self.lift_fraction, criterion: self.criterion }
    }
}
