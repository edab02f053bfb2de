use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::survival::{OutcomeColumn, SurvivalDataset};

const ID_COLUMNS: [&str; 2] = ["id", "subject_id"];

/// Missing cells per column of one CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMissingness {
    pub column: String,
    pub missing: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessReport {
    pub path: PathBuf,
    pub rows_read: usize,
    pub rows_kept: usize,
    pub columns: Vec<ColumnMissingness>,
}

impl std::fmt::Display for MissingnessReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}: kept {} of {} rows", self.path.display(), self.rows_kept, self.rows_read)?;
        for c in self.columns.iter().filter(|c| c.missing > 0) {
            writeln!(f, "  {:<24} {:>6} missing ({:.1}%)", c.column, c.missing, 100.0 * c.fraction)?;
        }
        Ok(())
    }
}

/// Complete-case cohort read from CSV, before standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCohort {
    pub ids: Vec<String>,
    pub predictor_names: Vec<String>,
    pub outcome_names: Vec<String>,
    pub covariates: DMatrix<f64>,
    pub outcomes: Vec<OutcomeColumn>,
    pub report: MissingnessReport,
}

enum Role {
    Id,
    Predictor(usize),
    Time(usize),
    Event(usize),
}

fn ingest_error(path: &Path, message: impl Into<String>) -> CoxError {
    CoxError::Ingest { path: path.to_path_buf(), message: message.into() }
}

fn outcome_slot(names: &mut Vec<String>, name: &str) -> usize {
    match names.iter().position(|n| n == name) {
        Some(i) => i,
        None => {
            names.push(name.to_string());
            names.len() - 1
        }
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let t = cell.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") || t == "." {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a cohort CSV. The header needs an `id` (or `subject_id`) column and
/// `time_<name>`/`event_<name>` pairs; every other column is a predictor.
/// Rows with any empty, `NA` or unparsable cell are dropped and counted.
pub fn read_cohort_csv(path: &Path) -> Result<RawCohort> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| ingest_error(path, e.to_string()))?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let mut predictor_names = Vec::new();
    let mut outcome_names: Vec<String> = Vec::new();
    let mut roles = Vec::with_capacity(header.len());
    let mut has_id = false;
    for h in &header {
        if !has_id && ID_COLUMNS.iter().any(|id| h.eq_ignore_ascii_case(id)) {
            has_id = true;
            roles.push(Role::Id);
        } else if let Some(name) = h.strip_prefix("time_") {
            roles.push(Role::Time(outcome_slot(&mut outcome_names, name)));
        } else if let Some(name) = h.strip_prefix("event_") {
            roles.push(Role::Event(outcome_slot(&mut outcome_names, name)));
        } else {
            predictor_names.push(h.clone());
            roles.push(Role::Predictor(predictor_names.len() - 1));
        }
    }
    if !has_id {
        return Err(ingest_error(path, "missing required column `id`"));
    }
    for (k, name) in outcome_names.iter().enumerate() {
        let has_time = roles.iter().any(|r| matches!(r, Role::Time(i) if *i == k));
        let has_event = roles.iter().any(|r| matches!(r, Role::Event(i) if *i == k));
        if !has_time || !has_event {
            let missing = if has_time { "event_" } else { "time_" };
            return Err(ingest_error(path, format!("missing required column `{missing}{name}`")));
        }
    }
    if outcome_names.is_empty() {
        return Err(ingest_error(path, "no time_<name>/event_<name> outcome columns"));
    }
    if predictor_names.is_empty() {
        return Err(ingest_error(path, "no predictor columns"));
    }

    let (p, k) = (predictor_names.len(), outcome_names.len());
    let mut missing = vec![0usize; header.len()];
    let mut rows_read = 0;
    let mut ids = Vec::new();
    let mut x: Vec<f64> = Vec::new();
    let mut times: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut events: Vec<Vec<bool>> = vec![Vec::new(); k];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ingest_error(path, e.to_string()))?;
        rows_read += 1;
        let row_number = line + 2;
        let mut complete = true;
        let mut id = String::new();
        let mut xrow = vec![0.0; p];
        let mut trow = vec![0.0; k];
        let mut erow = vec![false; k];
        for (c, role) in roles.iter().enumerate() {
            let cell = record.get(c).unwrap_or("");
            if let Role::Id = role {
                id = cell.trim().to_string();
                if id.is_empty() {
                    missing[c] += 1;
                    complete = false;
                }
                continue;
            }
            let Some(v) = parse_cell(cell) else {
                missing[c] += 1;
                complete = false;
                continue;
            };
            match *role {
                Role::Predictor(j) => xrow[j] = v,
                Role::Time(kk) => {
                    if v < 0.0 {
                        return Err(ingest_error(path, format!("negative time in `{}` on line {row_number}", header[c])));
                    }
                    trow[kk] = v;
                }
                Role::Event(kk) => {
                    erow[kk] = match v {
                        0.0 => false,
                        1.0 => true,
                        _ => {
                            return Err(ingest_error(
                                path,
                                format!("event value {v} outside {{0, 1}} in `{}` on line {row_number}", header[c]),
                            ))
                        }
                    }
                }
                Role::Id => unreachable!(),
            }
        }
        if complete {
            ids.push(id);
            x.extend_from_slice(&xrow);
            for kk in 0..k {
                times[kk].push(trow[kk]);
                events[kk].push(erow[kk]);
            }
        }
    }

    let rows_kept = ids.len();
    let report = MissingnessReport {
        path: path.to_path_buf(),
        rows_read,
        rows_kept,
        columns: header
            .iter()
            .zip(&missing)
            .map(|(h, &m)| ColumnMissingness {
                column: h.clone(),
                missing: m,
                fraction: if rows_read > 0 { m as f64 / rows_read as f64 } else { 0.0 },
            })
            .collect(),
    };
    if rows_kept == 0 {
        return Err(ingest_error(path, format!("empty dataset after complete-case filtering\n{report}")));
    }
    let outcomes = times
        .into_iter()
        .zip(events)
        .map(|(t, e)| OutcomeColumn::new(t, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(RawCohort {
        ids,
        predictor_names,
        outcome_names,
        covariates: DMatrix::from_row_slice(rows_kept, p, &x),
        outcomes,
        report,
    })
}

/// Column means and population standard deviations, applied as
/// `(x - mean) / sd`. Constant columns keep `sd = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub predictor_names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(predictor_names: &[String], x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            sd.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { predictor_names: predictor_names.to_vec(), mean, sd }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(CoxError::Dimension(format!(
                "standardizer has {} columns, data has {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.sd[j]))
    }
}

/// A standardized cohort ready for fitting.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub ids: Vec<String>,
    pub data: SurvivalDataset,
    pub report: MissingnessReport,
}

fn to_dataset(raw: RawCohort, standardizer: &Standardizer) -> Result<Cohort> {
    let x = standardizer.apply(&raw.covariates)?;
    let data = SurvivalDataset::new(x, raw.outcomes, raw.predictor_names, raw.outcome_names)
        .map_err(|e| ingest_error(&raw.report.path, e.to_string()))?;
    Ok(Cohort { ids: raw.ids, data, report: raw.report })
}

/// Reads and standardizes one cohort. With `standardizer = None` the
/// cohort's own statistics are used; the transform is returned either way.
pub fn ingest_csv(path: &Path, standardizer: Option<&Standardizer>) -> Result<(Cohort, Standardizer)> {
    let raw = read_cohort_csv(path)?;
    let st = match standardizer {
        Some(s) => {
            if s.predictor_names != raw.predictor_names {
                return Err(CoxError::Schema(format!(
                    "{}: predictors differ from the standardizing cohort",
                    path.display()
                )));
            }
            s.clone()
        }
        None => Standardizer::fit(&raw.predictor_names, &raw.covariates),
    };
    Ok((to_dataset(raw, &st)?, st))
}

#[derive(Debug, Clone)]
pub struct IngestedCohorts {
    pub source: Option<Cohort>,
    pub target: Cohort,
    /// Transform applied to the target (and to the source unless per-cohort).
    pub standardizer: Standardizer,
}

/// Reads a source/target pair. By default both are standardized with the
/// source cohort's statistics so their coefficients share one scale.
pub fn ingest_pair(source: Option<&Path>, target: &Path, per_cohort: bool) -> Result<IngestedCohorts> {
    match source {
        None => {
            let (target, st) = ingest_csv(target, None)?;
            Ok(IngestedCohorts { source: None, target, standardizer: st })
        }
        Some(sp) => {
            let (source, st) = ingest_csv(sp, None)?;
            let (target, st_target) = ingest_csv(target, if per_cohort { None } else { Some(&st) })?;
            if !source.data.same_schema(&target.data) {
                return Err(CoxError::Schema("source and target columns differ".into()));
            }
            let standardizer = if per_cohort { st_target } else { st };
            Ok(IngestedCohorts { source: Some(source), target, standardizer })
        }
    }
}

/// Writes a dataset in the layout [`read_cohort_csv`] accepts. Values are
/// printed in shortest round-trip form.
pub fn write_cohort_csv(path: &Path, ids: &[String], data: &SurvivalDataset) -> Result<()> {
    if ids.len() != data.n_subjects() {
        return Err(CoxError::Dimension("one id per subject required".into()));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut writer = csv::Writer::from_writer(&mut out);
    let mut header = vec!["id".to_string()];
    header.extend(data.predictor_names().iter().cloned());
    for name in data.outcome_names() {
        header.push(format!("time_{name}"));
        header.push(format!("event_{name}"));
    }
    writer.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(data.covariates().row(i).iter().map(|v| v.to_string()));
        for o in data.outcomes() {
            row.push(o.time[i].to_string());
            row.push(u8::from(o.event[i]).to_string());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    drop(writer);
    out.flush()?;
    Ok(())
}
