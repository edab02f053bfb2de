//! Evaluates the Cox partial likelihood and its gradient on a tiny dataset
//! with tied event times, and checks the gradient by central differences.
//!
//! `cargo run --example partial_likelihood`

use corecox::survival::{neg_log_partial_likelihood, plik_gradient, OutcomeColumn, SurvivalDataset};
use nalgebra::{DMatrix, DVector};

fn main() -> corecox::Result<()> {
    let x = DMatrix::from_row_slice(6, 2, &[0.5, 1.0, -1.2, 0.3, 0.8, -0.4, 0.0, 0.9, -0.3, -1.1, 1.4, 0.2]);
    let outcome = OutcomeColumn::new(
        vec![2.0, 3.0, 3.0, 5.0, 7.0, 7.0],
        vec![true, true, true, false, true, false],
    )?;
    let data = SurvivalDataset::unnamed(x, vec![outcome])?;
    let beta = DVector::from_vec(vec![0.4, -0.7]);

    let value = neg_log_partial_likelihood(&data, 0, &beta)?;
    let grad = plik_gradient(&data, 0, &beta)?;
    println!("negative log partial likelihood per event: {value:.6}");
    for j in 0..beta.len() {
        let h = 1e-6;
        let mut up = beta.clone();
        let mut down = beta.clone();
        up[j] += h;
        down[j] -= h;
        let fd = (neg_log_partial_likelihood(&data, 0, &up)? - neg_log_partial_likelihood(&data, 0, &down)?) / (2.0 * h);
        println!("d/dbeta{j}: analytic {:+.8}  finite difference {fd:+.8}", grad[j]);
    }
    Ok(())
}
