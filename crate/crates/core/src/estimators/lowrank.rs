use nalgebra::{DMatrix, DVector, SVD};

use super::cox::{solve_offset_problem, DIVERGENCE_LIMIT};
use super::penalty::{FitReport, PenaltyKind, PenaltySpec};
use super::solver::{lbfgs, SolverOptions};
use crate::error::{CoxError, Result};
use crate::survival::{CoxProblem, LowRankFactors, SurvivalDataset};

const LBFGS_MEMORY: usize = 10;
const SOLVER_OPTIONS: SolverOptions = SolverOptions {
    tol: 1e-7,
    max_iter: 5000,
    step_tol: 0.0,
    divergence_limit: DIVERGENCE_LIMIT,
};
const INIT_RIDGE_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFit {
    pub factors: LowRankFactors,
    pub report: FitReport,
}

fn validate(data: &SurvivalDataset, rank: usize, penalty: &PenaltySpec) -> Result<()> {
    let (p, k) = (data.n_predictors(), data.n_outcomes());
    if rank == 0 || rank > p.min(k) {
        return Err(CoxError::Rank { rank, p, k });
    }
    penalty.validate()?;
    if penalty.kind == PenaltyKind::L1 && penalty.lambda > 0.0 {
        return Err(CoxError::InvalidArgument(
            "low-rank factors take a Frobenius (l2) penalty or none".into(),
        ));
    }
    Ok(())
}

fn build_problems(data: &SurvivalDataset) -> Result<Vec<CoxProblem>> {
    (0..data.n_outcomes()).map(|k| CoxProblem::new(data, k)).collect()
}

/// Joint objective `Σₖ fₖ(U vₖ) + λ(‖U‖²_F + ‖V‖²_F)/2` with event-averaged
/// per-outcome losses and equal task weights.
pub fn lowrank_objective(
    data: &SurvivalDataset,
    factors: &LowRankFactors,
    penalty: PenaltySpec,
) -> Result<f64> {
    if factors.u.nrows() != data.n_predictors() || factors.v.nrows() != data.n_outcomes() {
        return Err(CoxError::Dimension("factors do not match dataset".into()));
    }
    let problems = build_problems(data)?;
    Ok(joint_objective(&problems, &factors.u, &factors.v, &penalty))
}

fn joint_objective(problems: &[CoxProblem], u: &DMatrix<f64>, v: &DMatrix<f64>, penalty: &PenaltySpec) -> f64 {
    let b = u * v.transpose();
    let loss: f64 = problems
        .iter()
        .enumerate()
        .map(|(k, pr)| pr.value(b.column(k).as_slice()))
        .sum();
    loss + penalty.value(u.as_slice()) + penalty.value(v.as_slice())
}

/// Low-rank multi-task Cox fit by limited-memory BFGS over both factors
/// jointly, started from the SVD of per-outcome ridge solutions.
pub fn fit_lowrank_mtl(data: &SurvivalDataset, rank: usize, penalty: PenaltySpec) -> Result<LowRankFit> {
    fit_lowrank_mtl_from(data, rank, penalty, None)
}

/// As [`fit_lowrank_mtl`], optionally warm-started from given factors of the
/// same shape.
pub fn fit_lowrank_mtl_from(
    data: &SurvivalDataset,
    rank: usize,
    penalty: PenaltySpec,
    init: Option<&LowRankFactors>,
) -> Result<LowRankFit> {
    validate(data, rank, &penalty)?;
    let (p, k) = (data.n_predictors(), data.n_outcomes());
    let problems = build_problems(data)?;
    let mut fixed_row = vec![false; p];
    for j in data.constant_predictors() {
        fixed_row[j] = true;
    }

    let (mut u, v) = match init {
        Some(f) => {
            if f.u.shape() != (p, rank) || f.v.shape() != (k, rank) {
                return Err(CoxError::Dimension("warm-start factors have the wrong shape".into()));
            }
            (f.u.clone(), f.v.clone())
        }
        None => spectral_init(&problems, rank, &fixed_row),
    };
    for j in 0..p {
        if fixed_row[j] {
            u.row_mut(j).fill(0.0);
        }
    }

    let n_u = p * rank;
    let mut x0: Vec<f64> = u.as_slice().to_vec();
    x0.extend_from_slice(v.as_slice());
    let mut fixed: Vec<bool> = (0..n_u).map(|idx| fixed_row[idx % p]).collect();
    fixed.resize(n_u + k * rank, false);
    let lambda = if penalty.is_none() { 0.0 } else { penalty.lambda };

    let mut gk = vec![0.0; p];
    let mut g_b = DMatrix::zeros(p, k);
    let (x, report) = lbfgs(
        |x, grad| {
            let um = DMatrix::from_column_slice(p, rank, &x[..n_u]);
            let vm = DMatrix::from_column_slice(k, rank, &x[n_u..]);
            let b = &um * vm.transpose();
            let mut total = 0.5 * lambda * x.iter().map(|t| t * t).sum::<f64>();
            for (kk, pr) in problems.iter().enumerate() {
                total += pr.value_grad(b.column(kk).as_slice(), &mut gk);
                g_b.set_column(kk, &DVector::from_column_slice(&gk));
            }
            let gu = &g_b * &vm + &um * lambda;
            let gv = g_b.transpose() * &um + &vm * lambda;
            grad[..n_u].copy_from_slice(gu.as_slice());
            grad[n_u..].copy_from_slice(gv.as_slice());
            total
        },
        x0,
        &fixed,
        LBFGS_MEMORY,
        &SOLVER_OPTIONS,
    );
    let u = DMatrix::from_column_slice(p, rank, &x[..n_u]);
    let v = DMatrix::from_column_slice(k, rank, &x[n_u..]);

    let factors = LowRankFactors::with_names(
        u,
        v,
        data.predictor_names().to_vec(),
        data.outcome_names().to_vec(),
    )?;
    Ok(LowRankFit { factors, report })
}

/// Top-`rank` singular pairs of the per-outcome ridge solutions, split
/// symmetrically between the two factors.
fn spectral_init(problems: &[CoxProblem], rank: usize, fixed_row: &[bool]) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = fixed_row.len();
    let k = problems.len();
    let zero = vec![0.0; p];
    let mut b0 = DMatrix::zeros(p, k);
    for (kk, pr) in problems.iter().enumerate() {
        let fit = solve_offset_problem(pr, &zero, PenaltySpec::l2(INIT_RIDGE_LAMBDA), fixed_row);
        b0.set_column(kk, &fit.beta);
    }
    let svd = SVD::new(b0, true, true);
    let left = svd.u.expect("left singular vectors requested");
    let right_t = svd.v_t.expect("right singular vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut u = DMatrix::zeros(p, rank);
    let mut v = DMatrix::zeros(k, rank);
    for (c, &i) in idx.iter().take(rank).enumerate() {
        // A vanishing component would start the alternation at a saddle point.
        let s = svd.singular_values[i].max(1e-6).sqrt();
        for j in 0..p {
            u[(j, c)] = left[(j, i)] * s;
        }
        for kk in 0..k {
            v[(kk, c)] = right_t[(i, kk)] * s;
        }
    }
    (u, v)
}
