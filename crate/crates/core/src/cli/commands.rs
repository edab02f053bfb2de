use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use nalgebra::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cli::artifact::ModelArtifact;
use crate::cli::config::{ExperimentConfig, FORMAT_VERSION};
use crate::cli::ingest::{ingest_pair, MissingnessReport, Standardizer};
use crate::error::{CoxError, Result};
use crate::estimators::fit_cox_offset;
use crate::evaluation::{
    assign_folds, bootstrap_hazard_ratios, fit_method, run_nested_cv, tune_and_fit, BootstrapOptions, CVPlan,
    FitContext, HazardRatioRow, Method, NestedCvReport, SourceCache, UnitFailure,
};
use crate::rng::derive_seed;
use crate::simulation::{generate, run_coverage_study, run_recovery_study, CoverageReport, RecoveryStudy};
use crate::survival::SurvivalDataset;

const TAG_FIT_INNER: u64 = 0x66_6974;
const TAG_FIT_BOOT: u64 = 0x62_6f6f_74;

/// Source and target cohorts for a run, from CSV files or a simulation.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub source: Option<SurvivalDataset>,
    pub target: SurvivalDataset,
    pub standardizer: Option<Standardizer>,
    pub missingness: Vec<MissingnessReport>,
}

pub fn load_inputs(config: &ExperimentConfig) -> Result<Inputs> {
    if let Some(data) = &config.data {
        let pair = ingest_pair(data.source.as_deref(), &data.target, data.per_cohort_standardization)?;
        let mut missingness = Vec::new();
        if let Some(s) = &pair.source {
            missingness.push(s.report.clone());
        }
        missingness.push(pair.target.report.clone());
        return Ok(Inputs {
            source: pair.source.map(|c| c.data),
            target: pair.target.data,
            standardizer: Some(pair.standardizer),
            missingness,
        });
    }
    let sim = config.simulation.as_ref().ok_or_else(|| CoxError::Config("no data or simulation".into()))?;
    let cohorts = generate(sim)?;
    Ok(Inputs { source: Some(cohorts.source), target: cohorts.target, standardizer: None, missingness: Vec::new() })
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn format_header(fingerprint: &str) -> String {
    format!("# corecox-format={FORMAT_VERSION} fingerprint={fingerprint}\n")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes a CSV whose first line is a `#` comment with the format version
/// and config fingerprint.
fn write_csv(path: &Path, fingerprint: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = format_header(fingerprint).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub corecox_version: String,
    pub command: String,
    pub config_fingerprint: String,
    pub standardization: String,
    /// Benchmark units (seed × fold × method) completed and failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completed_units: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_units: Option<usize>,
    pub config: ExperimentConfig,
    pub files: Vec<ManifestEntry>,
}

/// How predictors were put on a common scale, as flagged in every report.
pub fn standardization_policy(config: &ExperimentConfig) -> &'static str {
    match &config.data {
        Some(d) if d.per_cohort_standardization => "each cohort standardized by its own statistics",
        Some(d) if d.source.is_some() => "both cohorts standardized by source-cohort statistics",
        Some(_) => "target standardized by its own statistics",
        None => "none; simulated covariates are generated on unit scale",
    }
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: &ExperimentConfig,
    files: &[PathBuf],
    units: Option<(usize, usize)>,
) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let bytes = std::fs::read(f)?;
        entries.push(ManifestEntry {
            file: f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        corecox_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config_fingerprint: config.fingerprint(),
        standardization: standardization_policy(config).to_string(),
        completed_units: units.map(|u| u.0),
        failed_units: units.map(|u| u.1),
        config: ExperimentConfig { output_dir: None, ..config.clone() },
        files: entries,
    };
    let path = out.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    (Some(mean), sd)
}

#[derive(Debug, Clone, Serialize)]
pub struct OutcomeStat {
    pub outcome: String,
    pub mean_cindex: Option<f64>,
    pub sd_cindex: Option<f64>,
    pub mean_lift: Option<f64>,
    pub sd_lift: Option<f64>,
    pub n_scored: usize,
}

/// Difference in mean C-index against Cox over matched seed/fold units.
#[derive(Debug, Clone, Serialize)]
pub struct PairedDifference {
    pub mean: f64,
    pub sd: Option<f64>,
    pub n_pairs: usize,
    pub n_better: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodBenchmark {
    pub method: Method,
    pub mean_cindex: Option<f64>,
    pub sd_cindex: Option<f64>,
    pub mean_lift: Option<f64>,
    pub sd_lift: Option<f64>,
    /// Completed units over planned units (seeds × outer folds).
    pub completeness: f64,
    pub per_outcome: Vec<OutcomeStat>,
    pub paired_difference_vs_cox: Option<PairedDifference>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSummary {
    pub format_version: u32,
    pub config_fingerprint: String,
    pub standardization: String,
    pub seeds: Vec<u64>,
    pub outer_folds: usize,
    pub methods: Vec<MethodBenchmark>,
    pub failures: Vec<UnitFailure>,
}

impl BenchmarkSummary {
    pub fn method(&self, method: Method) -> Option<&MethodBenchmark> {
        self.methods.iter().find(|m| m.method == method)
    }
}

pub fn summarize_benchmark(
    report: &NestedCvReport,
    config: &ExperimentConfig,
    outcome_names: &[String],
) -> BenchmarkSummary {
    let planned = (config.seeds.len() * config.cv.outer_folds) as f64;
    let cox: BTreeMap<(u64, usize), f64> = report
        .for_method(Method::Cox)
        .filter_map(|r| Some(((r.seed, r.fold_index), r.mean_cindex()?)))
        .collect();
    let methods = config
        .methods
        .iter()
        .map(|&m| {
            let results: Vec<_> = report.for_method(m).collect();
            let unit_c: Vec<f64> = results.iter().filter_map(|r| r.mean_cindex()).collect();
            let unit_l: Vec<f64> = results.iter().filter_map(|r| r.mean_lift()).collect();
            let (mean_cindex, sd_cindex) = mean_sd(&unit_c);
            let (mean_lift, sd_lift) = mean_sd(&unit_l);
            let per_outcome = outcome_names
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let c: Vec<f64> = results.iter().filter_map(|r| r.per_outcome_cindex[k]).collect();
                    let l: Vec<f64> = results.iter().filter_map(|r| r.per_outcome_lift[k]).collect();
                    let (mean_cindex, sd_cindex) = mean_sd(&c);
                    let (mean_lift, sd_lift) = mean_sd(&l);
                    OutcomeStat { outcome: name.clone(), mean_cindex, sd_cindex, mean_lift, sd_lift, n_scored: c.len() }
                })
                .collect();
            let paired_difference_vs_cox = (m != Method::Cox && !cox.is_empty())
                .then(|| {
                    let diffs: Vec<f64> = results
                        .iter()
                        .filter_map(|r| Some(r.mean_cindex()? - cox.get(&(r.seed, r.fold_index))?))
                        .collect();
                    let (mean, sd) = mean_sd(&diffs);
                    mean.map(|mean| PairedDifference {
                        mean,
                        sd,
                        n_pairs: diffs.len(),
                        n_better: diffs.iter().filter(|d| **d > 0.0).count(),
                    })
                })
                .flatten();
            MethodBenchmark {
                method: m,
                mean_cindex,
                sd_cindex,
                mean_lift,
                sd_lift,
                completeness: results.len() as f64 / planned,
                per_outcome,
                paired_difference_vs_cox,
            }
        })
        .collect();
    BenchmarkSummary {
        format_version: FORMAT_VERSION,
        config_fingerprint: config.fingerprint(),
        standardization: standardization_policy(config).to_string(),
        seeds: config.seeds.clone(),
        outer_folds: config.cv.outer_folds,
        methods,
        failures: report.failures.clone(),
    }
}

/// Runs the nested cross-validation benchmark and writes `metrics.csv`,
/// `summary.json` and `manifest.json` to `out`.
pub fn cmd_benchmark(config: &ExperimentConfig, out: &Path) -> Result<BenchmarkSummary> {
    config.validate()?;
    ensure_dir(out)?;
    let inputs = load_inputs(config)?;
    let plan = CVPlan {
        outer_folds: config.cv.outer_folds,
        inner_folds: config.cv.inner_folds,
        seed: 0,
        stratify_by_event: config.cv.stratify_by_event,
    };
    info!(
        "benchmark: {} methods, {} seeds, {} target subjects",
        config.methods.len(),
        config.seeds.len(),
        inputs.target.n_subjects()
    );
    let report = run_nested_cv(
        inputs.source.as_ref(),
        &inputs.target,
        &config.methods,
        &config.grid,
        &plan,
        &config.seeds,
        &config.nested_cv_options(),
    )?;
    let fp = config.fingerprint();
    let names = inputs.target.outcome_names();
    let mut rows = Vec::new();
    for r in &report.results {
        for (k, name) in names.iter().enumerate() {
            rows.push(vec![
                r.method.to_string(),
                r.seed.to_string(),
                r.fold_index.to_string(),
                r.fold_hash.clone(),
                name.clone(),
                opt(r.per_outcome_cindex[k]),
                opt(r.per_outcome_lift[k]),
                r.chosen_hyperparameters.to_string(),
                r.converged.to_string(),
            ]);
        }
    }
    let metrics = out.join("metrics.csv");
    write_csv(
        &metrics,
        &fp,
        &["method", "seed", "fold", "fold_hash", "outcome", "c_index", "lift", "hyperparameters", "converged"],
        &rows,
    )?;
    let summary = summarize_benchmark(&report, config, names);
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary)?;
    write_manifest(out, "benchmark", config, &[metrics, summary_path], Some((report.results.len(), report.failures.len())))?;
    Ok(summary)
}

/// Fits one method on the whole target cohort and writes `model.json`,
/// `coefficients.csv` and, when requested, `hazard_ratios.csv`.
pub fn cmd_fit(config: &ExperimentConfig, method: Method, out: &Path) -> Result<ModelArtifact> {
    config.validate()?;
    ensure_dir(out)?;
    let inputs = load_inputs(config)?;
    let target = &inputs.target;
    let cache = SourceCache::build(inputs.source.as_ref(), &[method], &config.grid)?;
    let ctx = FitContext { source: inputs.source.as_ref(), cache: &cache, grid: &config.grid };
    let seed = config.seeds[0];
    let (hp, fit, inner_score) = match &config.fit.hyperparameters {
        Some(hp) => (hp.clone(), fit_method(method, hp, &ctx, target)?, None),
        None => {
            let inner = assign_folds(
                target,
                config.cv.inner_folds,
                derive_seed(seed, &[TAG_FIT_INNER]),
                config.cv.stratify_by_event,
            )?;
            let tuned = tune_and_fit(method, &ctx, target, &inner, config.criterion)?;
            (tuned.hyperparameters, tuned.fit, tuned.inner_score)
        }
    };
    info!("{method} fitted with [{hp}], converged = {}", fit.converged);
    let fp = config.fingerprint();
    let artifact = ModelArtifact::new(method, hp.clone(), &fit, inner_score, inputs.standardizer.clone(), fp.clone());
    let model = out.join("model.json");
    artifact.save(&model)?;

    let coefs = &fit.coefficients;
    let mut rows = Vec::new();
    for (k, outcome) in coefs.outcome_names.iter().enumerate() {
        for (j, predictor) in coefs.predictor_names.iter().enumerate() {
            let b = coefs.values[(j, k)];
            rows.push(vec![outcome.clone(), predictor.clone(), b.to_string(), b.exp().to_string()]);
        }
    }
    let coef_path = out.join("coefficients.csv");
    write_csv(&coef_path, &fp, &["outcome", "predictor", "coefficient", "hazard_ratio"], &rows)?;
    let mut files = vec![model, coef_path];

    if config.fit.hazard_ratios {
        let mut hr_rows: Vec<(String, HazardRatioRow)> = Vec::new();
        for (k, outcome) in target.outcome_names().iter().enumerate() {
            let options = BootstrapOptions {
                n_boot: config.bootstrap.n_boot,
                level: config.bootstrap.level,
                seed: derive_seed(seed, &[TAG_FIT_BOOT, k as u64]),
            };
            let rows = match &fit.transfer {
                // Stage 1 stays frozen; only the residual is refitted per replicate.
                Some(t) => {
                    let offset: DVector<f64> = t.source_matrix.column(k);
                    let penalty = match &hp.residual_lambdas {
                        Some(ls) => config.grid.residual_penalty(ls[k]),
                        None => t.residual_penalty,
                    };
                    bootstrap_hazard_ratios(
                        |d, kk| fit_cox_offset(d, kk, &offset, penalty).map(|f| &offset + f.beta),
                        target,
                        k,
                        method.name(),
                        &options,
                    )?
                }
                None => bootstrap_hazard_ratios(
                    |d, kk| fit_method(method, &hp, &ctx, d).map(|f| f.coefficients.column(kk)),
                    target,
                    k,
                    method.name(),
                    &options,
                )?,
            };
            hr_rows.extend(rows.into_iter().map(|r| (outcome.clone(), r)));
        }
        let rows: Vec<Vec<String>> = hr_rows
            .into_iter()
            .map(|(o, r)| {
                vec![
                    o,
                    r.predictor,
                    r.method,
                    r.hr.to_string(),
                    r.ci_low.to_string(),
                    r.ci_high.to_string(),
                    r.log_hr.to_string(),
                    r.log_ci_low.to_string(),
                    r.log_ci_high.to_string(),
                ]
            })
            .collect();
        let hr_path = out.join("hazard_ratios.csv");
        write_csv(
            &hr_path,
            &fp,
            &["outcome", "predictor", "method", "hr", "ci_low", "ci_high", "log_hr", "log_ci_low", "log_ci_high"],
            &rows,
        )?;
        files.push(hr_path);
    }
    write_manifest(out, &format!("fit --method {method}"), config, &files, None)?;
    Ok(artifact)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Recovery,
    Coverage,
    Both,
}

impl FromStr for Study {
    type Err = CoxError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "recovery" => Ok(Study::Recovery),
            "coverage" => Ok(Study::Coverage),
            "both" => Ok(Study::Both),
            other => Err(CoxError::InvalidArgument(format!("unknown study `{other}`"))),
        }
    }
}

#[derive(Debug, Default)]
pub struct SimulationOutput {
    pub recovery: Option<RecoveryStudy>,
    pub coverage: Option<CoverageReport>,
}

fn recovery_text(study: &RecoveryStudy) -> String {
    let mut s = String::from("Coefficient recovery (RRMSE of the target matrix)\n");
    for m in &study.summary {
        let _ = writeln!(
            s,
            "  {:<14} mean {:.4}  se {:.4}  ok {}  failed {}",
            m.method, m.mean, m.standard_error, m.n_ok, m.n_failed
        );
    }
    for other in [Method::Cox, Method::LrMtlSource] {
        if let Some(w) = study.paired_win_fraction(Method::CoreCox, other) {
            let _ = writeln!(s, "  CORE-Cox beats {other} in {:.1}% of replicates", 100.0 * w);
        }
    }
    s
}

fn coverage_text(report: &CoverageReport) -> String {
    let mut s = format!("Bootstrap coverage (CORE-Cox at [{}])\n", report.core_cox_hyperparameters);
    for m in &report.summary {
        let _ = writeln!(
            s,
            "  {:<14} coverage {:.3}  width(log HR) {:.4}  width(HR) {:.4}  intervals {}  failed {}",
            m.method, m.coverage, m.mean_width_log, m.mean_width_hr, m.n_intervals, m.n_failed
        );
    }
    s
}

/// Runs the recovery and/or coverage study on the configured simulation.
pub fn cmd_simulate(config: &ExperimentConfig, study: Study, out: &Path) -> Result<SimulationOutput> {
    config.validate()?;
    let sim = config
        .simulation
        .as_ref()
        .ok_or_else(|| CoxError::Config("simulate needs a `simulation` section".into()))?;
    ensure_dir(out)?;
    let fp = config.fingerprint();
    let mut files = Vec::new();
    let mut text = format_header(&fp);
    let mut output = SimulationOutput::default();

    if matches!(study, Study::Recovery | Study::Both) {
        let r = run_recovery_study(sim, &config.recovery)?;
        let rows: Vec<Vec<String>> = r
            .rows
            .iter()
            .map(|row| {
                let per: Vec<String> = row.per_outcome_rrmse.iter().map(|v| v.to_string()).collect();
                vec![
                    row.replicate.to_string(),
                    row.seed.to_string(),
                    row.method.to_string(),
                    opt(row.rrmse),
                    per.join("|"),
                    row.hyperparameters.to_string(),
                    row.error.clone().unwrap_or_default(),
                ]
            })
            .collect();
        let csv_path = out.join("recovery.csv");
        write_csv(
            &csv_path,
            &fp,
            &["replicate", "seed", "method", "rrmse", "per_outcome_rrmse", "hyperparameters", "error"],
            &rows,
        )?;
        let json_path = out.join("recovery_summary.json");
        write_json(&json_path, &serde_json::json!({
            "format_version": FORMAT_VERSION,
            "config_fingerprint": fp,
            "summary": r.summary,
            "core_cox_win_fraction_vs_cox": r.paired_win_fraction(Method::CoreCox, Method::Cox),
            "core_cox_win_fraction_vs_lr_mtl_source": r.paired_win_fraction(Method::CoreCox, Method::LrMtlSource),
        }))?;
        files.extend([csv_path, json_path]);
        text.push_str(&recovery_text(&r));
        text.push('\n');
        output.recovery = Some(r);
    }
    if matches!(study, Study::Coverage | Study::Both) {
        let c = run_coverage_study(sim, &config.coverage)?;
        let rows: Vec<Vec<String>> = c
            .rows
            .iter()
            .map(|row| {
                vec![
                    row.experiment.to_string(),
                    row.method.to_string(),
                    row.outcome.clone(),
                    row.predictor.clone(),
                    row.truth.to_string(),
                    row.estimate.to_string(),
                    row.log_ci_low.to_string(),
                    row.log_ci_high.to_string(),
                    row.covered.to_string(),
                    row.width_log.to_string(),
                    row.width_hr.to_string(),
                ]
            })
            .collect();
        let csv_path = out.join("coverage.csv");
        write_csv(
            &csv_path,
            &fp,
            &[
                "experiment", "method", "outcome", "predictor", "truth", "estimate", "log_ci_low", "log_ci_high",
                "covered", "width_log", "width_hr",
            ],
            &rows,
        )?;
        let json_path = out.join("coverage_summary.json");
        write_json(&json_path, &serde_json::json!({
            "format_version": FORMAT_VERSION,
            "config_fingerprint": fp,
            "core_cox_hyperparameters": c.core_cox_hyperparameters,
            "summary": c.summary,
        }))?;
        files.extend([csv_path, json_path]);
        text.push_str(&coverage_text(&c));
        text.push('\n');
        output.coverage = Some(c);
    }
    let _ = writeln!(text, "Standardization: {}", standardization_policy(config));
    text.push_str("Generative assumptions\n");
    text.push_str(crate::simulation::GENERATIVE_ASSUMPTIONS);
    text.push('\n');
    let txt = out.join("summary.txt");
    std::fs::write(&txt, &text)?;
    files.push(txt);
    write_manifest(out, "simulate", config, &files, None)?;
    Ok(output)
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortSummary {
    pub path: PathBuf,
    pub n_subjects: usize,
    pub event_counts: BTreeMap<String, usize>,
    pub missingness: MissingnessReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataValidation {
    pub predictors: Vec<String>,
    pub outcomes: Vec<String>,
    pub source: CohortSummary,
    pub target: CohortSummary,
    pub warnings: Vec<String>,
}

impl std::fmt::Display for DataValidation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "predictors ({}): {}", self.predictors.len(), self.predictors.join(", "))?;
        writeln!(f, "outcomes ({}): {}", self.outcomes.len(), self.outcomes.join(", "))?;
        for (label, c) in [("source", &self.source), ("target", &self.target)] {
            writeln!(f, "{label}: {} subjects", c.n_subjects)?;
            for (name, n) in &c.event_counts {
                writeln!(f, "  events {name:<20} {n}")?;
            }
            write!(f, "  {}", c.missingness)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Minimum events per outcome below which a cohort is flagged.
const FEW_EVENTS: usize = 10;

/// Checks that two cohort files parse, share a schema, and have usable
/// outcomes. Schema problems are errors; sparse outcomes are warnings.
pub fn validate_data(source: &Path, target: &Path) -> Result<DataValidation> {
    let pair = ingest_pair(Some(source), target, false)?;
    let src = pair.source.expect("source requested");
    let summarize = |path: &Path, data: &SurvivalDataset, report: &MissingnessReport| CohortSummary {
        path: path.to_path_buf(),
        n_subjects: data.n_subjects(),
        event_counts: data.outcome_names().iter().cloned().zip(data.event_counts()).collect(),
        missingness: report.clone(),
    };
    let mut warnings = Vec::new();
    for (label, data) in [("source", &src.data), ("target", &pair.target.data)] {
        for (name, n) in data.outcome_names().iter().zip(data.event_counts()) {
            if n < FEW_EVENTS {
                warnings.push(format!("{label} outcome `{name}` has only {n} events"));
            }
        }
        for j in data.constant_predictors() {
            warnings.push(format!("{label} predictor `{}` is constant", data.predictor_names()[j]));
        }
    }
    Ok(DataValidation {
        predictors: src.data.predictor_names().to_vec(),
        outcomes: src.data.outcome_names().to_vec(),
        source: summarize(source, &src.data, &src.report),
        target: summarize(target, &pair.target.data, &pair.target.report),
        warnings,
    })
}
