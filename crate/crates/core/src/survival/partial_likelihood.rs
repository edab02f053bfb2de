use nalgebra::{DMatrix, DVector};

use super::data::{CoefficientMatrix, LowRankFactors, SurvivalDataset};
use crate::error::{CoxError, Result};

#[derive(Debug, Clone, Copy)]
struct TieGroup {
    start: usize,
    end: usize,
    events: usize,
}

/// One outcome of a dataset laid out for repeated partial-likelihood
/// evaluation.
///
/// Subjects are sorted once by descending time so every risk set is a prefix
/// of the sorted order; subjects sharing a time form a tie group that enters
/// the risk set together (Breslow). The objective is the negative log partial
/// likelihood divided by the number of events.
///
/// Risk-set sums are accumulated relative to the running maximum of the linear
/// predictor, rescaling whenever a new maximum appears, so no exponential
/// overflows or underflows to an empty risk set.
#[derive(Debug, Clone)]
pub struct CoxProblem {
    n: usize,
    p: usize,
    n_events: usize,
    /// Row-major `n × p` covariates in descending-time order.
    x: Vec<f64>,
    groups: Vec<TieGroup>,
    /// Sum of covariate rows over subjects with an observed event.
    event_x_sum: Vec<f64>,
    order: Vec<usize>,
}

impl CoxProblem {
    pub fn new(data: &SurvivalDataset, outcome_index: usize) -> Result<Self> {
        let outcome = data.outcome(outcome_index)?;
        let n_events = outcome.event_count();
        if n_events == 0 {
            return Err(CoxError::NoEvents(outcome_index));
        }
        let (n, p) = (data.n_subjects(), data.n_predictors());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| outcome.time[b].total_cmp(&outcome.time[a]).then(a.cmp(&b)));

        let cov = data.covariates();
        let mut x = Vec::with_capacity(n * p);
        for &i in &order {
            x.extend((0..p).map(|j| cov[(i, j)]));
        }

        let mut event_x_sum = vec![0.0; p];
        let mut groups = Vec::new();
        let mut start = 0;
        while start < n {
            let t = outcome.time[order[start]];
            let mut end = start;
            let mut events = 0;
            while end < n && outcome.time[order[end]] == t {
                if outcome.event[order[end]] {
                    events += 1;
                    for j in 0..p {
                        event_x_sum[j] += x[end * p + j];
                    }
                }
                end += 1;
            }
            groups.push(TieGroup { start, end, events });
            start = end;
        }

        Ok(Self { n, p, n_events, x, groups, event_x_sum, order })
    }

    pub fn n_subjects(&self) -> usize {
        self.n
    }

    pub fn n_predictors(&self) -> usize {
        self.p
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    /// Number of additive event terms in the log partial likelihood.
    pub fn n_terms(&self) -> usize {
        self.groups.iter().map(|g| g.events).sum()
    }

    /// Original subject indices in descending-time order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        self.x
            .chunks_exact(self.p)
            .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn event_eta_sum(&self, beta: &[f64]) -> f64 {
        self.event_x_sum.iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        debug_assert_eq!(beta.len(), self.p);
        let eta = self.linear_predictor(beta);
        let mut shift = eta[0];
        let mut s0 = 0.0;
        let mut log_denominators = 0.0;
        for g in &self.groups {
            for &e in &eta[g.start..g.end] {
                if e > shift {
                    s0 *= (shift - e).exp();
                    shift = e;
                }
                s0 += (e - shift).exp();
            }
            if g.events > 0 {
                log_denominators += g.events as f64 * (s0.ln() + shift);
            }
        }
        (log_denominators - self.event_eta_sum(beta)) / self.n_events as f64
    }

    /// Objective value; the gradient is written into `grad`.
    pub fn value_grad(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(beta.len(), self.p);
        debug_assert_eq!(grad.len(), self.p);
        let p = self.p;
        let eta = self.linear_predictor(beta);
        let mut shift = eta[0];
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        grad.iter_mut().zip(&self.event_x_sum).for_each(|(g, s)| *g = -s);
        let mut log_denominators = 0.0;
        for g in &self.groups {
            for i in g.start..g.end {
                if eta[i] > shift {
                    let r = (shift - eta[i]).exp();
                    s0 *= r;
                    s1.iter_mut().for_each(|v| *v *= r);
                    shift = eta[i];
                }
                let w = (eta[i] - shift).exp();
                s0 += w;
                let row = &self.x[i * p..(i + 1) * p];
                for j in 0..p {
                    s1[j] += w * row[j];
                }
            }
            if g.events > 0 {
                let d = g.events as f64;
                log_denominators += d * (s0.ln() + shift);
                let scale = d / s0;
                for j in 0..p {
                    grad[j] += scale * s1[j];
                }
            }
        }
        let inv = 1.0 / self.n_events as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (log_denominators - self.event_eta_sum(beta)) * inv
    }

    /// Objective value, gradient and Hessian.
    pub fn value_grad_hessian(&self, beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = self.p;
        let eta = self.linear_predictor(beta);
        let mut shift = eta[0];
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut grad = DVector::from_iterator(p, self.event_x_sum.iter().map(|s| -s));
        let mut hess = DMatrix::zeros(p, p);
        let mut log_denominators = 0.0;
        for g in &self.groups {
            for i in g.start..g.end {
                if eta[i] > shift {
                    let r = (shift - eta[i]).exp();
                    s0 *= r;
                    s1.iter_mut().for_each(|v| *v *= r);
                    s2.iter_mut().for_each(|v| *v *= r);
                    shift = eta[i];
                }
                let w = (eta[i] - shift).exp();
                s0 += w;
                let row = &self.x[i * p..(i + 1) * p];
                for a in 0..p {
                    let wa = w * row[a];
                    s1[a] += wa;
                    for b in a..p {
                        s2[a * p + b] += wa * row[b];
                    }
                }
            }
            if g.events > 0 {
                let d = g.events as f64;
                log_denominators += d * (s0.ln() + shift);
                for a in 0..p {
                    let ma = s1[a] / s0;
                    grad[a] += d * ma;
                    for b in a..p {
                        hess[(a, b)] += d * (s2[a * p + b] / s0 - ma * s1[b] / s0);
                    }
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        let inv = 1.0 / self.n_events as f64;
        grad *= inv;
        hess *= inv;
        ((log_denominators - self.event_eta_sum(beta)) * inv, grad, hess)
    }
}

fn check_beta(data: &SurvivalDataset, beta: &DVector<f64>) -> Result<()> {
    if beta.len() != data.n_predictors() {
        return Err(CoxError::Dimension(format!(
            "beta has length {}, dataset has {} predictors",
            beta.len(),
            data.n_predictors()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(CoxError::NonFinite("beta"));
    }
    Ok(())
}

/// Event-averaged negative log Cox partial likelihood (Breslow ties) of
/// outcome `outcome_index` at `beta`.
pub fn neg_log_partial_likelihood(
    data: &SurvivalDataset,
    outcome_index: usize,
    beta: &DVector<f64>,
) -> Result<f64> {
    check_beta(data, beta)?;
    Ok(CoxProblem::new(data, outcome_index)?.value(beta.as_slice()))
}

/// Gradient of [`neg_log_partial_likelihood`] with respect to `beta`.
pub fn plik_gradient(
    data: &SurvivalDataset,
    outcome_index: usize,
    beta: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_beta(data, beta)?;
    let problem = CoxProblem::new(data, outcome_index)?;
    let mut grad = DVector::zeros(beta.len());
    problem.value_grad(beta.as_slice(), grad.as_mut_slice());
    Ok(grad)
}

/// Linear predictor `xᵢᵀβ` per subject. Only meaningful as a ranking.
pub fn log_risk_scores(data: &SurvivalDataset, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if beta.len() != data.n_predictors() {
        return Err(CoxError::Dimension(format!(
            "beta has length {}, dataset has {} predictors",
            beta.len(),
            data.n_predictors()
        )));
    }
    Ok(data.covariates() * beta)
}

/// `B = U Vᵀ`.
pub fn materialize(factors: &LowRankFactors) -> CoefficientMatrix {
    CoefficientMatrix {
        values: &factors.u * factors.v.transpose(),
        predictor_names: factors.predictor_names.clone(),
        outcome_names: factors.outcome_names.clone(),
    }
}
