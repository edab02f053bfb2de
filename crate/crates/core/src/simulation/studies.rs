use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::estimators::{fit_cox, fit_cox_offset, fit_lowrank_mtl, PenaltySpec};
use crate::evaluation::{
    assign_folds, bootstrap_replicates, percentile_intervals, tune_and_fit, BootstrapOptions, FitContext,
    HyperGrid, Hyperparameters, Method, SourceCache, TuningCriterion,
};
use crate::rng::derive_seed;
use crate::simulation::generate::{generate, rrmse, rrmse_per_outcome, SimConfig};
use crate::survival::SurvivalDataset;

/// Generative choices substituted for unavailable simulation settings. Every
/// study report repeats this text.
pub const GENERATIVE_ASSUMPTIONS: &str = "\
covariates: standard normal with equicorrelation `covariate_correlation`
source coefficients: U V^T with U (p x r), V (k x r) entries uniform on [-1, 1], columns rescaled to unit l2 norm
shift: exactly round(shift_sparsity * p * k) cells set to +/- shift_magnitude with random signs
event times: inverse transform of the configured baseline cumulative hazard times exp(x^T beta)
censoring: independent exponential per subject and outcome; one rate, bisected so the pooled target censoring fraction is within 0.02 of the configured value, shared by the source cohort
standardization: none (covariates are generated on unit scale)
rrmse: ||estimate - truth||_F / ||truth||_F over the whole target matrix
intervals: nonparametric percentile bootstrap on the log-hazard scale, widened to contain the point estimate";

const TAG_REPLICATE: u64 = 0x7265_706c;
const TAG_INNER: u64 = 0x696e_6e72;
const TAG_PILOT: u64 = 0x7069_6c6f;
const TAG_EXPERIMENT: u64 = 0x6578_7065;
const TAG_BOOTSTRAP: u64 = 0x626f_6f74;

/// Seed of replicate `index` in a study based at `config.rng_seed`.
pub fn replicate_seed(config: &SimConfig, index: usize) -> u64 {
    derive_seed(config.rng_seed, &[TAG_REPLICATE, index as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryOptions {
    pub methods: Vec<Method>,
    pub grid: HyperGrid,
    pub n_replicates: usize,
    pub inner_folds: usize,
    pub criterion: TuningCriterion,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            methods: vec![Method::Cox, Method::LrMtlSource, Method::CoreCox],
            grid: HyperGrid::default(),
            n_replicates: 50,
            inner_folds: 4,
            criterion: TuningCriterion::ValidationLikelihood,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    /// `None` when the fit failed; see `error`.
    pub rrmse: Option<f64>,
    pub per_outcome_rrmse: Vec<f64>,
    pub hyperparameters: Hyperparameters,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: f64,
    pub standard_error: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryStudy {
    pub config: SimConfig,
    /// Ordered by replicate, then by method as listed in the options.
    pub rows: Vec<RecoveryRow>,
    pub summary: Vec<MethodSummary>,
    pub assumptions: String,
}

impl RecoveryStudy {
    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// Fraction of replicates, among those where both fits succeeded, in which
    /// `a` has strictly smaller RRMSE than `b`.
    pub fn paired_win_fraction(&self, a: Method, b: Method) -> Option<f64> {
        let value = |r: usize, m: Method| {
            self.rows.iter().find(|row| row.replicate == r && row.method == m).and_then(|row| row.rrmse)
        };
        let replicates: Vec<usize> = {
            let mut v: Vec<usize> = self.rows.iter().map(|r| r.replicate).collect();
            v.dedup();
            v
        };
        let pairs: Vec<(f64, f64)> = replicates
            .into_iter()
            .filter_map(|r| Some((value(r, a)?, value(r, b)?)))
            .collect();
        (!pairs.is_empty()).then(|| pairs.iter().filter(|(x, y)| x < y).count() as f64 / pairs.len() as f64)
    }
}

fn summarize(method: Method, values: &[f64], n_failed: usize) -> MethodSummary {
    let n = values.len();
    let mean = if n > 0 { values.iter().sum::<f64>() / n as f64 } else { f64::NAN };
    let se = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    MethodSummary { method, mean, standard_error: se, n_ok: n, n_failed }
}

/// Coefficient-recovery study. Each replicate draws fresh cohorts from its
/// own seed, tunes every method by inner cross-validation on the target only
/// (the truth is never consulted), and records the RRMSE of the target matrix.
pub fn run_recovery_study(config: &SimConfig, options: &RecoveryOptions) -> Result<RecoveryStudy> {
    config.validate()?;
    options.grid.validate()?;
    if options.n_replicates < 10 {
        return Err(CoxError::Config(format!("n_replicates must be at least 10, got {}", options.n_replicates)));
    }
    if options.methods.is_empty() {
        return Err(CoxError::Config("no methods requested".into()));
    }
    let per_replicate: Vec<Vec<RecoveryRow>> = (0..options.n_replicates)
        .into_par_iter()
        .map(|r| recovery_replicate(config, options, r))
        .collect::<Result<_>>()?;
    let rows: Vec<RecoveryRow> = per_replicate.into_iter().flatten().collect();
    let summary = options
        .methods
        .iter()
        .map(|&m| {
            let mine: Vec<&RecoveryRow> = rows.iter().filter(|r| r.method == m).collect();
            let ok: Vec<f64> = mine.iter().filter_map(|r| r.rrmse).collect();
            summarize(m, &ok, mine.len() - ok.len())
        })
        .collect();
    Ok(RecoveryStudy { config: config.clone(), rows, summary, assumptions: GENERATIVE_ASSUMPTIONS.to_string() })
}

fn recovery_replicate(config: &SimConfig, options: &RecoveryOptions, r: usize) -> Result<Vec<RecoveryRow>> {
    let seed = replicate_seed(config, r);
    let cohorts = generate(&config.with_seed(seed))?;
    let cache = SourceCache::build(Some(&cohorts.source), &options.methods, &options.grid)?;
    let ctx = FitContext { source: Some(&cohorts.source), cache: &cache, grid: &options.grid };
    let inner = assign_folds(&cohorts.target, options.inner_folds, derive_seed(seed, &[TAG_INNER]), true)?;
    let truth = &cohorts.truth.b_target_true;
    let rows = options
        .methods
        .iter()
        .map(|&method| {
            let fitted = tune_and_fit(method, &ctx, &cohorts.target, &inner, options.criterion).and_then(|t| {
                let total = rrmse(&t.fit.coefficients, truth)?;
                let cols = rrmse_per_outcome(&t.fit.coefficients, truth)?;
                Ok((t.hyperparameters, total, cols))
            });
            match fitted {
                Ok((hp, total, cols)) => RecoveryRow {
                    replicate: r,
                    seed,
                    method,
                    rrmse: Some(total),
                    per_outcome_rrmse: cols,
                    hyperparameters: hp,
                    error: None,
                },
                Err(e) => {
                    warn!("replicate {r}: {method} failed: {e}");
                    RecoveryRow {
                        replicate: r,
                        seed,
                        method,
                        rrmse: None,
                        per_outcome_rrmse: Vec::new(),
                        hyperparameters: Hyperparameters::default(),
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    info!("recovery replicate {r} done");
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageOptions {
    pub n_experiments: usize,
    pub n_boot: usize,
    pub level: f64,
    /// Grid searched once, on a pilot replicate, for CORE-Cox.
    pub grid: HyperGrid,
    pub inner_folds: usize,
    pub criterion: TuningCriterion,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self {
            n_experiments: 200,
            n_boot: 200,
            level: 0.95,
            grid: HyperGrid::default(),
            inner_folds: 4,
            criterion: TuningCriterion::ValidationLikelihood,
        }
    }
}

/// One bootstrap interval for one true coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub experiment: usize,
    pub method: Method,
    pub outcome: String,
    pub predictor: String,
    pub truth: f64,
    pub estimate: f64,
    pub log_ci_low: f64,
    pub log_ci_high: f64,
    pub covered: bool,
    pub width_log: f64,
    pub width_hr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub method: Method,
    pub coverage: f64,
    pub mean_width_log: f64,
    pub mean_width_hr: f64,
    pub n_intervals: usize,
    /// Experiment/outcome units dropped because the bootstrap failed.
    pub n_failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub config: SimConfig,
    pub core_cox_hyperparameters: Hyperparameters,
    pub rows: Vec<CoverageRow>,
    pub summary: Vec<CoverageSummary>,
    pub assumptions: String,
}

impl CoverageReport {
    pub fn summary_for(&self, method: Method) -> Option<&CoverageSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

/// Tunes CORE-Cox on a pilot replicate that is not reused afterwards.
pub fn tune_on_pilot(config: &SimConfig, options: &CoverageOptions) -> Result<Hyperparameters> {
    let seed = derive_seed(config.rng_seed, &[TAG_PILOT]);
    let pilot = generate(&config.with_seed(seed))?;
    let methods = [Method::CoreCox];
    let cache = SourceCache::build(Some(&pilot.source), &methods, &options.grid)?;
    let ctx = FitContext { source: Some(&pilot.source), cache: &cache, grid: &options.grid };
    let inner = assign_folds(&pilot.target, options.inner_folds, derive_seed(seed, &[TAG_INNER]), true)?;
    Ok(tune_and_fit(Method::CoreCox, &ctx, &pilot.target, &inner, options.criterion)?.hyperparameters)
}

/// Bootstrap coverage and width of CORE-Cox and target-only Cox intervals for
/// the true target coefficients. CORE-Cox uses hyperparameters tuned once on a
/// pilot replicate; its source model is fitted once per experiment and held
/// fixed while target rows are resampled.
pub fn run_coverage_study(config: &SimConfig, options: &CoverageOptions) -> Result<CoverageReport> {
    config.validate()?;
    options.grid.validate()?;
    if options.n_experiments == 0 {
        return Err(CoxError::Config("n_experiments must be positive".into()));
    }
    if options.n_experiments < 100 {
        warn!("{} experiments is below 100; coverage estimates will be noisy", options.n_experiments);
    }
    BootstrapOptions { n_boot: options.n_boot, level: options.level, seed: 0 }.validate()?;
    let hp = tune_on_pilot(config, options)?;
    info!("coverage study: CORE-Cox fixed at {hp}");

    let per_experiment: Vec<(Vec<CoverageRow>, [usize; 2])> = (0..options.n_experiments)
        .into_par_iter()
        .map(|e| coverage_experiment(config, options, &hp, e))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut failed = [0usize; 2];
    for (r, f) in per_experiment {
        rows.extend(r);
        failed[0] += f[0];
        failed[1] += f[1];
    }
    let summary = [Method::CoreCox, Method::Cox]
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let mine: Vec<&CoverageRow> = rows.iter().filter(|r| r.method == m).collect();
            let n = mine.len().max(1) as f64;
            CoverageSummary {
                method: m,
                coverage: mine.iter().filter(|r| r.covered).count() as f64 / n,
                mean_width_log: mine.iter().map(|r| r.width_log).sum::<f64>() / n,
                mean_width_hr: mine.iter().map(|r| r.width_hr).sum::<f64>() / n,
                n_intervals: mine.len(),
                n_failed: failed[i],
            }
        })
        .collect();
    Ok(CoverageReport {
        config: config.clone(),
        core_cox_hyperparameters: hp,
        rows,
        summary,
        assumptions: GENERATIVE_ASSUMPTIONS.to_string(),
    })
}

fn coverage_experiment(
    config: &SimConfig,
    options: &CoverageOptions,
    hp: &Hyperparameters,
    e: usize,
) -> Result<(Vec<CoverageRow>, [usize; 2])> {
    let seed = derive_seed(config.rng_seed, &[TAG_EXPERIMENT, e as u64]);
    let cohorts = generate(&config.with_seed(seed))?;
    let target = &cohorts.target;
    let rank = hp.rank.ok_or_else(|| CoxError::Config("pilot tuning returned no rank".into()))?;
    let stage1 = fit_lowrank_mtl(&cohorts.source, rank, PenaltySpec::l2(hp.factor_lambda.unwrap_or(0.0)))?;
    let source_matrix = crate::survival::materialize(&stage1.factors).values;
    let residual_lambda = |k: usize| match &hp.residual_lambdas {
        Some(ls) => ls[k],
        None => hp.residual_lambda.unwrap_or(0.0),
    };

    let mut rows = Vec::new();
    let mut failed = [0usize; 2];
    for k in 0..target.n_outcomes() {
        let offset: DVector<f64> = source_matrix.column(k).into_owned();
        let penalty = options.grid.residual_penalty(residual_lambda(k));
        let core = |d: &SurvivalDataset, kk: usize| fit_cox_offset(d, kk, &offset, penalty).map(|f| &offset + f.beta);
        let cox = |d: &SurvivalDataset, kk: usize| fit_cox(d, kk).map(|f| f.beta);
        let boot = BootstrapOptions {
            n_boot: options.n_boot,
            level: options.level,
            seed: derive_seed(seed, &[TAG_BOOTSTRAP, k as u64]),
        };
        let fits: [(Method, &(dyn Fn(&SurvivalDataset, usize) -> Result<DVector<f64>> + Sync)); 2] =
            [(Method::CoreCox, &core), (Method::Cox, &cox)];
        for (i, (method, fit_fn)) in fits.into_iter().enumerate() {
            let intervals = fit_fn(target, k).and_then(|point| {
                let reps = bootstrap_replicates(&fit_fn, target, k, &boot)?;
                Ok((percentile_intervals(&point, &reps, options.level), point))
            });
            let (intervals, point) = match intervals {
                Ok(v) => v,
                Err(err) => {
                    warn!("experiment {e}, outcome {k}: {method} bootstrap failed: {err}");
                    failed[i] += 1;
                    continue;
                }
            };
            for (j, (low, high)) in intervals.into_iter().enumerate() {
                let truth = cohorts.truth.b_target_true[(j, k)];
                rows.push(CoverageRow {
                    experiment: e,
                    method,
                    outcome: target.outcome_names()[k].clone(),
                    predictor: target.predictor_names()[j].clone(),
                    truth,
                    estimate: point[j],
                    log_ci_low: low,
                    log_ci_high: high,
                    covered: low <= truth && truth <= high,
                    width_log: high - low,
                    width_hr: high.exp() - low.exp(),
                });
            }
        }
    }
    Ok((rows, failed))
}
