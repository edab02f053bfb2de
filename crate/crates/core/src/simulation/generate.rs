use nalgebra::{DMatrix, SVD};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};
use crate::rng::stream;
use crate::survival::{default_names, CoefficientMatrix, OutcomeColumn, SurvivalDataset};

const CENSORING_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Baseline {
    /// Constant baseline hazard `rate`.
    Exponential { rate: f64 },
    /// Cumulative baseline hazard `(t / scale)^shape`.
    Weibull { shape: f64, scale: f64 },
}

impl Baseline {
    /// Inverts `H₀(t)·exp(η) = e` for `t`.
    fn event_time(&self, unit_exp: f64, eta: f64) -> f64 {
        let h = unit_exp * (-eta).exp();
        match *self {
            Baseline::Exponential { rate } => h / rate,
            Baseline::Weibull { shape, scale } => scale * h.powf(1.0 / shape),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_source: usize,
    pub n_target: usize,
    pub p: usize,
    pub k: usize,
    pub true_rank: usize,
    /// Fraction of `(predictor, outcome)` cells with a nonzero shift.
    pub shift_sparsity: f64,
    pub shift_magnitude: f64,
    pub baseline: Baseline,
    /// Target censoring fraction; `0` disables censoring.
    pub censoring_rate_target: f64,
    pub covariate_correlation: f64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_source: 20_000,
            n_target: 150,
            p: 10,
            k: 6,
            true_rank: 2,
            shift_sparsity: 0.1,
            shift_magnitude: 0.3,
            baseline: Baseline::Exponential { rate: 1.0 },
            censoring_rate_target: 0.5,
            covariate_correlation: 0.2,
            rng_seed: 20_240_601,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoxError::Config(m));
        if self.n_source < 2 || self.n_target < 2 {
            return bad("cohorts need at least 2 subjects".into());
        }
        if self.p == 0 || self.k == 0 {
            return bad("p and k must be positive".into());
        }
        if self.true_rank == 0 || self.true_rank > self.p.min(self.k) {
            return bad(format!("true_rank {} out of range", self.true_rank));
        }
        if !(0.0..=1.0).contains(&self.shift_sparsity) {
            return bad("shift_sparsity must lie in [0, 1]".into());
        }
        if !self.shift_magnitude.is_finite() || self.shift_magnitude < 0.0 {
            return bad("shift_magnitude must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.censoring_rate_target) {
            return bad("censoring_rate_target must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.covariate_correlation) {
            return bad("covariate_correlation must lie in [0, 1)".into());
        }
        let ok = match self.baseline {
            Baseline::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Baseline::Weibull { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
        };
        if !ok {
            return bad("baseline parameters must be positive".into());
        }
        Ok(())
    }

    /// Same scenario with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { rng_seed: seed, ..self.clone() }
    }
}

/// Generative truth behind a simulated pair of cohorts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub b_source_true: DMatrix<f64>,
    pub theta_true: DMatrix<f64>,
    pub b_target_true: DMatrix<f64>,
    /// Exponential censoring rate calibrated on the target and applied to both cohorts.
    pub censoring_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SimulatedCohorts {
    pub source: SurvivalDataset,
    pub target: SurvivalDataset,
    pub truth: SimTruth,
}

impl SimulatedCohorts {
    pub fn target_truth(&self) -> CoefficientMatrix {
        CoefficientMatrix {
            values: self.truth.b_target_true.clone(),
            predictor_names: self.target.predictor_names().to_vec(),
            outcome_names: self.target.outcome_names().to_vec(),
        }
    }
}

const STREAM_TRUTH: u64 = 1;
const STREAM_SOURCE: u64 = 2;
const STREAM_TARGET: u64 = 3;

/// Draws source and target cohorts from `config`. Bit-reproducible from
/// `config.rng_seed`: the truth, the source cohort and the target cohort each
/// come from their own ChaCha8 stream.
pub fn generate(config: &SimConfig) -> Result<SimulatedCohorts> {
    config.validate()?;
    let (p, k) = (config.p, config.k);

    let mut rng = stream(config.rng_seed, &[STREAM_TRUTH]);
    let b_source_true = low_rank_truth(&mut rng, p, k, config.true_rank);
    let theta_true = sparse_shift(&mut rng, p, k, config.shift_sparsity, config.shift_magnitude);
    let b_target_true = &b_source_true + &theta_true;

    let mut target_rng = stream(config.rng_seed, &[STREAM_TARGET]);
    let target_draw = draw_cohort(&mut target_rng, config, &b_target_true, config.n_target);
    let censoring_rate = calibrate_censoring(&target_draw, config.censoring_rate_target)?;
    let target = target_draw.censor(censoring_rate)?;

    let mut source_rng = stream(config.rng_seed, &[STREAM_SOURCE]);
    let source = draw_cohort(&mut source_rng, config, &b_source_true, config.n_source).censor(censoring_rate)?;

    Ok(SimulatedCohorts {
        source,
        target,
        truth: SimTruth { b_source_true, theta_true, b_target_true, censoring_rate },
    })
}

fn low_rank_truth(rng: &mut ChaCha8Rng, p: usize, k: usize, rank: usize) -> DMatrix<f64> {
    loop {
        let u = DMatrix::from_fn(p, rank, |_, _| rng.random_range(-1.0..1.0));
        let v = DMatrix::from_fn(k, rank, |_, _| rng.random_range(-1.0..1.0));
        let mut b = u * v.transpose();
        let norms: Vec<f64> = b.column_iter().map(|c| c.norm()).collect();
        if norms.iter().any(|n| *n < 1e-8) {
            continue;
        }
        for (mut col, n) in b.column_iter_mut().zip(&norms) {
            col /= *n;
        }
        let sv = SVD::new(b.clone(), false, false).singular_values;
        let top = sv.max();
        if sv.iter().filter(|s| **s > 1e-10 * top).count() == rank {
            return b;
        }
    }
}

fn sparse_shift(rng: &mut ChaCha8Rng, p: usize, k: usize, sparsity: f64, magnitude: f64) -> DMatrix<f64> {
    let cells = p * k;
    let nonzero = ((sparsity * cells as f64).round() as usize).min(cells);
    // Partial Fisher-Yates over cell indices.
    let mut idx: Vec<usize> = (0..cells).collect();
    for i in 0..nonzero {
        let j = rng.random_range(i..cells);
        idx.swap(i, j);
    }
    let mut theta = DMatrix::zeros(p, k);
    for &cell in &idx[..nonzero] {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        theta[(cell % p, cell / p)] = sign * magnitude;
    }
    theta
}

struct UncensoredCohort {
    covariates: DMatrix<f64>,
    /// `n × K` latent event times.
    event_times: DMatrix<f64>,
    /// `n × K` unit-rate exponential draws; censoring time is `draw / rate`.
    censor_draws: DMatrix<f64>,
    p: usize,
    k: usize,
}

fn draw_cohort(rng: &mut ChaCha8Rng, config: &SimConfig, b: &DMatrix<f64>, n: usize) -> UncensoredCohort {
    let (p, k) = (config.p, config.k);
    let rho = config.covariate_correlation;
    let (shared, own) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut covariates = DMatrix::zeros(n, p);
    for i in 0..n {
        let common: f64 = StandardNormal.sample(rng);
        for j in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            covariates[(i, j)] = shared * common + own * z;
        }
    }
    let eta = &covariates * b;
    let mut event_times = DMatrix::zeros(n, k);
    let mut censor_draws = DMatrix::zeros(n, k);
    for i in 0..n {
        for kk in 0..k {
            let e: f64 = Exp1.sample(rng);
            event_times[(i, kk)] = config.baseline.event_time(e, eta[(i, kk)]);
            censor_draws[(i, kk)] = Exp1.sample(rng);
        }
    }
    UncensoredCohort { covariates, event_times, censor_draws, p, k }
}

impl UncensoredCohort {
    fn censored_fraction(&self, rate: f64) -> f64 {
        if rate == 0.0 {
            return 0.0;
        }
        let censored = self
            .event_times
            .iter()
            .zip(self.censor_draws.iter())
            .filter(|(t, c)| **c / rate < **t)
            .count();
        censored as f64 / self.event_times.len() as f64
    }

    fn censor(self, rate: f64) -> Result<SurvivalDataset> {
        let n = self.covariates.nrows();
        let outcomes = (0..self.k)
            .map(|kk| {
                let mut time = Vec::with_capacity(n);
                let mut event = Vec::with_capacity(n);
                for i in 0..n {
                    let t = self.event_times[(i, kk)];
                    let c = if rate == 0.0 { f64::INFINITY } else { self.censor_draws[(i, kk)] / rate };
                    time.push(t.min(c));
                    event.push(t <= c);
                }
                OutcomeColumn::new(time, event)
            })
            .collect::<Result<Vec<_>>>()?;
        SurvivalDataset::new(self.covariates, outcomes, default_names("x", self.p), default_names("y", self.k))
    }
}

/// Bisection on the log censoring rate until the realized censored fraction
/// over all target cells is within tolerance of the requested value.
fn calibrate_censoring(cohort: &UncensoredCohort, target: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-30.0_f64, 30.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let frac = cohort.censored_fraction(mid.exp());
        if (frac - target).abs() <= CENSORING_TOLERANCE / 2.0 {
            return Ok(mid.exp());
        }
        if frac < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rate = (0.5 * (lo + hi)).exp();
    let realized = cohort.censored_fraction(rate);
    if (realized - target).abs() <= CENSORING_TOLERANCE {
        Ok(rate)
    } else {
        Err(CoxError::Infeasible(format!(
            "censoring fraction {target} unreachable; closest realized value {realized:.4}"
        )))
    }
}

/// `‖estimate − truth‖_F / ‖truth‖_F`.
pub fn rrmse(estimate: &CoefficientMatrix, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.values.shape() != truth.shape() {
        return Err(CoxError::Dimension(format!(
            "estimate is {:?}, truth is {:?}",
            estimate.values.shape(),
            truth.shape()
        )));
    }
    let scale = truth.norm();
    if scale == 0.0 {
        return Err(CoxError::InvalidArgument("truth has zero Frobenius norm".into()));
    }
    Ok((&estimate.values - truth).norm() / scale)
}

/// Column-wise relative error; columns with a zero true vector report `NaN`.
pub fn rrmse_per_outcome(estimate: &CoefficientMatrix, truth: &DMatrix<f64>) -> Result<Vec<f64>> {
    if estimate.values.shape() != truth.shape() {
        return Err(CoxError::Dimension("estimate and truth differ in shape".into()));
    }
    Ok((0..truth.ncols())
        .map(|k| {
            let t = truth.column(k);
            let n = t.norm();
            if n == 0.0 {
                f64::NAN
            } else {
                (estimate.values.column(k) - t).norm() / n
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_cox;

    fn small() -> SimConfig {
        SimConfig { n_source: 500, n_target: 150, ..Default::default() }
    }

    #[test]
    fn reproducible_and_rank_exact() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.target, b.target);
        assert_eq!(a.truth, b.truth);
        let sv = SVD::new(a.truth.b_source_true.clone(), false, false).singular_values;
        let top = sv.max();
        assert_eq!(sv.iter().filter(|s| **s > 1e-10 * top).count(), 2);
        for c in a.truth.b_source_true.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        let c = generate(&small().with_seed(99)).unwrap();
        assert_ne!(a.target, c.target);
    }

    #[test]
    fn shift_pattern_and_no_shift_limit() {
        let a = generate(&small()).unwrap();
        let nz: Vec<f64> = a.truth.theta_true.iter().copied().filter(|t| *t != 0.0).collect();
        assert_eq!(nz.len(), 6);
        assert!(nz.iter().all(|t| t.abs() == 0.3));
        let none = generate(&SimConfig { shift_magnitude: 0.0, ..small() }).unwrap();
        assert_eq!(none.truth.b_target_true, none.truth.b_source_true);
    }

    #[test]
    fn censoring_is_calibrated() {
        for target in [0.1, 0.3, 0.6] {
            let d = generate(&SimConfig { censoring_rate_target: target, ..small() }).unwrap();
            let cells = (d.target.n_subjects() * d.target.n_outcomes()) as f64;
            let events: usize = d.target.event_counts().iter().sum();
            let realized = 1.0 - events as f64 / cells;
            assert!((realized - target).abs() <= 0.02, "{realized} vs {target}");
        }
    }

    #[test]
    fn infeasible_censoring_reported() {
        let cfg = SimConfig { n_target: 2, k: 1, p: 1, true_rank: 1, censoring_rate_target: 0.3, ..small() };
        assert!(matches!(generate(&cfg), Err(CoxError::Infeasible(_))));
    }

    #[test]
    fn null_exponential_mean_is_one() {
        let cfg = SimConfig {
            n_source: 10,
            n_target: 10_000,
            p: 2,
            k: 1,
            true_rank: 1,
            shift_magnitude: 0.0,
            censoring_rate_target: 0.0,
            ..Default::default()
        };
        let mut cohort = draw_cohort(&mut stream(5, &[0]), &cfg, &DMatrix::zeros(2, 1), 10_000);
        cohort.censor_draws.fill(1.0);
        let d = cohort.censor(0.0).unwrap();
        let mean = d.outcomes()[0].time.iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
        assert_eq!(d.event_counts(), vec![10_000]);
    }

    #[test]
    fn weibull_baseline_inverts_cumulative_hazard() {
        let b = Baseline::Weibull { shape: 2.0, scale: 3.0 };
        let t = b.event_time(0.5, 0.4);
        assert!(((t / 3.0).powf(2.0) * 0.4f64.exp() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn large_source_recovers_truth() {
        let cfg = SimConfig { n_source: 50_000, n_target: 150, p: 5, k: 2, true_rank: 1, ..Default::default() };
        let d = generate(&cfg).unwrap();
        let fit = fit_cox(&d.source, 0).unwrap();
        let truth = d.truth.b_source_true.column(0);
        assert!((fit.beta - truth).amax() < 0.03);
    }

    #[test]
    fn rrmse_anchors() {
        let t = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let est = |m: DMatrix<f64>| CoefficientMatrix::new(m, default_names("x", 2), default_names("y", 2)).unwrap();
        assert_eq!(rrmse(&est(t.clone()), &t).unwrap(), 0.0);
        assert_eq!(rrmse(&est(DMatrix::zeros(2, 2)), &t).unwrap(), 1.0);
        assert_eq!(rrmse(&est(&t * 2.0), &t).unwrap(), 1.0);
        assert!(rrmse(&est(t.clone()), &DMatrix::zeros(2, 2)).is_err());
        assert!(rrmse(&est(t.clone()), &DMatrix::zeros(3, 2)).is_err());
    }
}
