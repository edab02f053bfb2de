use nalgebra::{DMatrix, DVector};

use crate::error::{CoxError, Result};

/// Follow-up time and event indicator for one outcome over all subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeColumn {
    pub time: Vec<f64>,
    /// `true` = event observed, `false` = right-censored.
    pub event: Vec<bool>,
}

impl OutcomeColumn {
    pub fn new(time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        if time.len() != event.len() {
            return Err(CoxError::Dimension(format!(
                "time has {} entries but event has {}",
                time.len(),
                event.len()
            )));
        }
        if let Some(t) = time.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(CoxError::InvalidData(format!(
                "follow-up times must be finite and non-negative, found {t}"
            )));
        }
        Ok(Self { time, event })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }

    fn select(&self, rows: &[usize]) -> Self {
        Self {
            time: rows.iter().map(|&i| self.time[i]).collect(),
            event: rows.iter().map(|&i| self.event[i]).collect(),
        }
    }
}

/// Covariates plus `K` right-censored outcomes over the same `n` subjects.
///
/// Rows are subjects, columns of `covariates` are predictors. The dataset is
/// immutable once built; row subsets and pooled datasets are new values.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    covariates: DMatrix<f64>,
    outcomes: Vec<OutcomeColumn>,
    predictor_names: Vec<String>,
    outcome_names: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(
        covariates: DMatrix<f64>,
        outcomes: Vec<OutcomeColumn>,
        predictor_names: Vec<String>,
        outcome_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = covariates.shape();
        if p == 0 || outcomes.is_empty() {
            return Err(CoxError::InvalidData(
                "need at least one predictor and one outcome".into(),
            ));
        }
        if n < 2 {
            return Err(CoxError::InvalidData(format!("need at least 2 subjects, got {n}")));
        }
        if predictor_names.len() != p {
            return Err(CoxError::Dimension(format!(
                "{} predictor names for {p} predictors",
                predictor_names.len()
            )));
        }
        if outcome_names.len() != outcomes.len() {
            return Err(CoxError::Dimension(format!(
                "{} outcome names for {} outcomes",
                outcome_names.len(),
                outcomes.len()
            )));
        }
        for (k, col) in outcomes.iter().enumerate() {
            if col.len() != n {
                return Err(CoxError::Dimension(format!(
                    "outcome {k} has {} entries, expected {n}",
                    col.len()
                )));
            }
            if col.time.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(CoxError::InvalidData(format!(
                    "outcome {k} has a negative or non-finite time"
                )));
            }
        }
        if covariates.iter().any(|x| !x.is_finite()) {
            return Err(CoxError::NonFinite("covariates"));
        }
        Ok(Self { covariates, outcomes, predictor_names, outcome_names })
    }

    /// Builds a dataset with generated names `x1..xp` and `y1..yK`.
    pub fn unnamed(covariates: DMatrix<f64>, outcomes: Vec<OutcomeColumn>) -> Result<Self> {
        let p = covariates.ncols();
        let k = outcomes.len();
        Self::new(covariates, outcomes, default_names("x", p), default_names("y", k))
    }

    pub fn n_subjects(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn n_predictors(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn outcomes(&self) -> &[OutcomeColumn] {
        &self.outcomes
    }

    pub fn outcome(&self, k: usize) -> Result<&OutcomeColumn> {
        self.outcomes.get(k).ok_or_else(|| {
            CoxError::Dimension(format!("outcome index {k} out of range ({})", self.n_outcomes()))
        })
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.predictor_names
    }

    pub fn outcome_names(&self) -> &[String] {
        &self.outcome_names
    }

    pub fn event_counts(&self) -> Vec<usize> {
        self.outcomes.iter().map(OutcomeColumn::event_count).collect()
    }

    /// Returns a new dataset made of the given rows, in the given order.
    /// Repeated indices are allowed (bootstrap resampling).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(CoxError::InvalidData(format!(
                "row subset of size {} is too small",
                rows.len()
            )));
        }
        let n = self.n_subjects();
        if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
            return Err(CoxError::Dimension(format!("row {bad} out of range ({n})")));
        }
        let covariates = self.covariates.select_rows(rows.iter());
        Ok(Self {
            covariates,
            outcomes: self.outcomes.iter().map(|c| c.select(rows)).collect(),
            predictor_names: self.predictor_names.clone(),
            outcome_names: self.outcome_names.clone(),
        })
    }

    /// Returns the same subjects with covariates replaced.
    pub fn with_covariates(&self, covariates: DMatrix<f64>, predictor_names: Vec<String>) -> Result<Self> {
        if covariates.nrows() != self.n_subjects() {
            return Err(CoxError::Dimension(format!(
                "replacement covariates have {} rows, expected {}",
                covariates.nrows(),
                self.n_subjects()
            )));
        }
        Self::new(covariates, self.outcomes.clone(), predictor_names, self.outcome_names.clone())
    }

    /// Same predictor and outcome names in the same order.
    pub fn same_schema(&self, other: &Self) -> bool {
        self.predictor_names == other.predictor_names && self.outcome_names == other.outcome_names
    }

    /// Indices of predictors that are constant over all subjects.
    pub fn constant_predictors(&self) -> Vec<usize> {
        (0..self.n_predictors())
            .filter(|&j| {
                let col = self.covariates.column(j);
                let first = col[0];
                col.iter().all(|&x| x == first)
            })
            .collect()
    }
}

pub(crate) fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

/// `p × K` matrix of per-outcome log hazard ratios. Column `k` is the Cox
/// coefficient vector for outcome `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub values: DMatrix<f64>,
    pub predictor_names: Vec<String>,
    pub outcome_names: Vec<String>,
}

impl CoefficientMatrix {
    pub fn new(
        values: DMatrix<f64>,
        predictor_names: Vec<String>,
        outcome_names: Vec<String>,
    ) -> Result<Self> {
        if values.nrows() != predictor_names.len() || values.ncols() != outcome_names.len() {
            return Err(CoxError::Dimension(format!(
                "{}x{} coefficient matrix with {} predictor and {} outcome names",
                values.nrows(),
                values.ncols(),
                predictor_names.len(),
                outcome_names.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(CoxError::NonFinite("coefficient matrix"));
        }
        Ok(Self { values, predictor_names, outcome_names })
    }

    pub fn zeros_like(data: &SurvivalDataset) -> Self {
        Self {
            values: DMatrix::zeros(data.n_predictors(), data.n_outcomes()),
            predictor_names: data.predictor_names().to_vec(),
            outcome_names: data.outcome_names().to_vec(),
        }
    }

    /// Builds a matrix from per-outcome columns, named after `data`.
    pub fn from_columns(data: &SurvivalDataset, columns: &[DVector<f64>]) -> Result<Self> {
        if columns.len() != data.n_outcomes() {
            return Err(CoxError::Dimension(format!(
                "{} columns for {} outcomes",
                columns.len(),
                data.n_outcomes()
            )));
        }
        if columns.iter().any(|c| c.len() != data.n_predictors()) {
            return Err(CoxError::Dimension("column length differs from p".into()));
        }
        Self::new(
            DMatrix::from_columns(columns),
            data.predictor_names().to_vec(),
            data.outcome_names().to_vec(),
        )
    }

    pub fn column(&self, k: usize) -> DVector<f64> {
        self.values.column(k).into_owned()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn matches(&self, data: &SurvivalDataset) -> bool {
        self.shape() == (data.n_predictors(), data.n_outcomes())
    }
}

/// Rank-`r` factorization `B = U Vᵀ` with `U: p × r` and `V: K × r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub predictor_names: Vec<String>,
    pub outcome_names: Vec<String>,
}

impl LowRankFactors {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        let (p, k) = (u.nrows(), v.nrows());
        Self::with_names(u, v, default_names("x", p), default_names("y", k))
    }

    pub fn with_names(
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        predictor_names: Vec<String>,
        outcome_names: Vec<String>,
    ) -> Result<Self> {
        let (p, r) = u.shape();
        let k = v.nrows();
        if v.ncols() != r {
            return Err(CoxError::Dimension(format!(
                "U has {r} columns but V has {}",
                v.ncols()
            )));
        }
        if r == 0 || r > p.min(k) {
            return Err(CoxError::Rank { rank: r, p, k });
        }
        if predictor_names.len() != p || outcome_names.len() != k {
            return Err(CoxError::Dimension("factor names do not match factor shapes".into()));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(CoxError::NonFinite("low-rank factors"));
        }
        Ok(Self { u, v, predictor_names, outcome_names })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }
}
