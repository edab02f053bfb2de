//! Proximal-gradient, damped-Newton and limited-memory BFGS minimizers over
//! flat parameter vectors.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::penalty::{FitReport, PenaltySpec};

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Newton only: the step must also be this small before declaring convergence,
    /// which separates a true optimum from a likelihood that flattens toward infinity.
    pub step_tol: f64,
    pub divergence_limit: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 200, step_tol: 1e-6, divergence_limit: super::DIVERGENCE_LIMIT }
    }
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn diverged(x: &[f64], limit: f64) -> bool {
    x.iter().any(|v| v.abs() > limit)
}

/// Minimizes `smooth(x) + penalty(x)` by proximal gradient with a
/// Barzilai-Borwein trial step and backtracking on the quadratic upper bound.
/// Every accepted iterate has objective no larger than its predecessor.
/// Coordinates with `fixed[j]` stay at their initial value.
pub(crate) fn proximal_gradient<F>(
    mut smooth: F,
    penalty: &PenaltySpec,
    x0: Vec<f64>,
    fixed: &[bool],
    opts: &SolverOptions,
) -> (Vec<f64>, FitReport)
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = smooth(&x, &mut g);
    mask(&mut g, fixed);
    let mut objective = f + penalty.value(&x);
    let mut trace = vec![objective];

    let mut z = vec![0.0; n];
    let mut gz = vec![0.0; n];
    let mut step = 1.0;
    let mut mapping_norm = f64::INFINITY;
    let mut converged = false;
    let mut message = None;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut accepted = false;
        let mut fz = f;
        for _ in 0..60 {
            for j in 0..n {
                z[j] = x[j] - step * g[j];
            }
            penalty.prox(&mut z, step);
            for j in 0..n {
                if fixed[j] {
                    z[j] = x[j];
                }
            }
            let mut lin = 0.0;
            let mut sq = 0.0;
            for j in 0..n {
                let d = z[j] - x[j];
                lin += g[j] * d;
                sq += d * d;
            }
            fz = smooth(&z, &mut gz);
            if fz.is_finite() && fz <= f + lin + sq / (2.0 * step) + 1e-14 * f.abs() {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            message = Some("line search failed".to_string());
            break;
        }
        mask(&mut gz, fixed);
        mapping_norm = x.iter().zip(&z).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / step;

        let mut sy = 0.0;
        let mut ss = 0.0;
        for j in 0..n {
            let s = z[j] - x[j];
            sy += s * (gz[j] - g[j]);
            ss += s * s;
        }
        std::mem::swap(&mut x, &mut z);
        std::mem::swap(&mut g, &mut gz);
        f = fz;
        objective = f + penalty.value(&x);
        trace.push(objective);

        if diverged(&x, opts.divergence_limit) {
            message = Some("coefficient magnitude exceeded divergence limit".to_string());
            break;
        }
        if mapping_norm <= opts.tol {
            converged = true;
            break;
        }
        step = if sy > 0.0 && ss > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (step * 2.0).min(1e10) };
    }

    let report = FitReport {
        converged,
        iterations,
        final_objective: objective,
        grad_norm_at_exit: mapping_norm,
        message,
        objective_trace: trace,
    };
    (x, report)
}

fn mask(g: &mut [f64], fixed: &[bool]) {
    for (gj, &fx) in g.iter_mut().zip(fixed) {
        if fx {
            *gj = 0.0;
        }
    }
}

/// Damped Newton with Armijo backtracking for smooth convex objectives.
pub(crate) fn newton<V, H>(
    mut value: V,
    mut value_grad_hessian: H,
    x0: Vec<f64>,
    fixed: &[bool],
    opts: &SolverOptions,
) -> (Vec<f64>, FitReport)
where
    V: FnMut(&[f64]) -> f64,
    H: FnMut(&[f64]) -> (f64, DVector<f64>, DMatrix<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut message = None;
    let mut iterations = 0;
    let mut grad_norm;
    let mut objective;

    loop {
        let (f, mut g, mut h) = value_grad_hessian(&x);
        objective = f;
        if trace.is_empty() {
            trace.push(f);
        }
        for j in 0..n {
            if fixed[j] {
                g[j] = 0.0;
                for k in 0..n {
                    h[(j, k)] = 0.0;
                    h[(k, j)] = 0.0;
                }
                h[(j, j)] = 1.0;
            }
        }
        grad_norm = max_abs(g.as_slice());
        let direction = solve_regularized(h, &g);
        let step_norm = max_abs(direction.as_slice());
        if grad_norm <= opts.tol && step_norm <= opts.step_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            message = Some("iteration limit reached".to_string());
            break;
        }
        iterations += 1;

        let slope = g.dot(&direction);
        let mut alpha = 1.0;
        let mut next = vec![0.0; n];
        let mut accepted = false;
        for _ in 0..50 {
            for j in 0..n {
                next[j] = x[j] + alpha * direction[j];
            }
            let fn_ = value(&next);
            if fn_.is_finite() && fn_ <= f + 1e-4 * alpha * slope {
                accepted = true;
                objective = fn_;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            message = Some(if grad_norm <= opts.tol {
                "objective flat but Newton step not vanishing; possible separation".to_string()
            } else {
                "line search failed".to_string()
            });
            break;
        }
        x = next;
        trace.push(objective);
        if diverged(&x, opts.divergence_limit) {
            message = Some("coefficient magnitude exceeded divergence limit".to_string());
            break;
        }
    }

    let report = FitReport {
        converged,
        iterations,
        final_objective: objective,
        grad_norm_at_exit: grad_norm,
        message,
        objective_trace: trace,
    };
    (x, report)
}

/// Limited-memory BFGS with Armijo backtracking for smooth objectives.
/// Accepted iterates never increase the objective.
pub(crate) fn lbfgs<F>(mut value_grad: F, x0: Vec<f64>, fixed: &[bool], memory: usize, opts: &SolverOptions) -> (Vec<f64>, FitReport)
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = value_grad(&x, &mut g);
    mask(&mut g, fixed);
    let mut trace = vec![f];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut converged = false;
    let mut message = None;
    let mut iterations = 0;
    let mut next = vec![0.0; n];
    let mut g_next = vec![0.0; n];

    loop {
        let grad_norm = max_abs(&g);
        if grad_norm <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            message = Some("iteration limit reached".to_string());
            break;
        }
        iterations += 1;

        let mut d = two_loop(&g, &history);
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut t = if history.is_empty() { (1.0 / max_abs(&d)).min(1.0) } else { 1.0 };
        let slack = 1e-14 * f.abs();
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..n {
                next[j] = x[j] + t * d[j];
            }
            let fn_ = value_grad(&next, &mut g_next);
            if fn_.is_finite() && fn_ <= f + 1e-4 * t * slope + slack {
                accepted = true;
                mask(&mut g_next, fixed);
                let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                if sy > 1e-12 * y.iter().map(|v| v * v).sum::<f64>().sqrt() * s.iter().map(|v| v * v).sum::<f64>().sqrt() {
                    if history.len() == memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                let decrease = f - fn_;
                std::mem::swap(&mut x, &mut next);
                std::mem::swap(&mut g, &mut g_next);
                f = fn_;
                trace.push(f);
                if decrease <= slack {
                    // No representable progress left at this precision.
                    converged = max_abs(&g) <= opts.tol * 100.0;
                    if !converged {
                        message = Some("stalled at floating-point precision".to_string());
                    }
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            message = Some("line search failed".to_string());
            break;
        }
        if converged || message.is_some() {
            break;
        }
        if diverged(&x, opts.divergence_limit) {
            message = Some("coefficient magnitude exceeded divergence limit".to_string());
            break;
        }
    }

    let report = FitReport {
        converged,
        iterations,
        final_objective: f,
        grad_norm_at_exit: max_abs(&g),
        message,
        objective_trace: trace,
    };
    (x, report)
}

/// `-H g` for the implicit inverse-Hessian approximation held in `history`.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Solves `H d = -g`, adding a growing ridge if `H` is not positive definite.
fn solve_regularized(h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let n = g.len();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let mut ridge = 0.0;
    for _ in 0..30 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            return -chol.solve(g);
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    }
    -g.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_minimizes_rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            g[1] = 200.0 * (x[1] - x[0] * x[0]);
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        };
        let opts = SolverOptions { tol: 1e-9, max_iter: 1000, step_tol: 0.0, divergence_limit: f64::INFINITY };
        let (x, rep) = lbfgs(f, vec![-1.2, 1.0], &[false, false], 8, &opts);
        assert!(rep.converged, "{rep:?}");
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn lbfgs_respects_fixed_coordinates() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = x[0] - 1.0;
            g[1] = x[1] + 2.0;
            0.5 * (x[0] - 1.0).powi(2) + 0.5 * (x[1] + 2.0).powi(2)
        };
        let (x, rep) = lbfgs(f, vec![0.0, 0.5], &[false, true], 5, &SolverOptions::default());
        assert!(rep.converged);
        assert!((x[0] - 1.0).abs() < 1e-7);
        assert_eq!(x[1], 0.5);
    }

    #[test]
    fn prox_gradient_solves_lasso_quadratic() {
        // min (x-3)^2/2 + (y+0.2)^2/2 + |x| + |y|  => x = 2, y = 0
        let smooth = |x: &[f64], g: &mut [f64]| {
            g[0] = x[0] - 3.0;
            g[1] = x[1] + 0.2;
            0.5 * (x[0] - 3.0).powi(2) + 0.5 * (x[1] + 0.2).powi(2)
        };
        let (x, rep) = proximal_gradient(
            smooth,
            &PenaltySpec::l1(1.0),
            vec![0.0, 0.0],
            &[false, false],
            &SolverOptions { max_iter: 1000, ..Default::default() },
        );
        assert!(rep.converged);
        assert!((x[0] - 2.0).abs() < 1e-9);
        assert_eq!(x[1], 0.0);
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    }

    #[test]
    fn newton_quadratic_one_step() {
        let (x, rep) = newton(
            |x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 2.0).powi(2),
            |x: &[f64]| {
                (
                    (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 2.0).powi(2),
                    DVector::from_vec(vec![2.0 * (x[0] - 1.0), 4.0 * (x[1] + 2.0)]),
                    DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0])),
                )
            },
            vec![0.0, 0.0],
            &[false, false],
            &SolverOptions::default(),
        );
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 2.0).abs() < 1e-12);
    }
}
