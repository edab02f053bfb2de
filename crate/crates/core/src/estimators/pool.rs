use crate::error::{CoxError, Result};
use crate::survival::{OutcomeColumn, SurvivalDataset};

/// Row-concatenates two cohorts with identical predictor and outcome schemas.
pub fn pool_datasets(a: &SurvivalDataset, b: &SurvivalDataset) -> Result<SurvivalDataset> {
    pool_many(&[a, b])
}

/// Row-concatenates any number of cohorts; a single cohort is returned as is.
pub fn pool_many(parts: &[&SurvivalDataset]) -> Result<SurvivalDataset> {
    let first = parts
        .first()
        .ok_or_else(|| CoxError::InvalidArgument("nothing to pool".into()))?;
    if let Some(bad) = parts.iter().find(|d| !first.same_schema(d)) {
        return Err(CoxError::Schema(format!(
            "cannot pool {:?}/{:?} with {:?}/{:?}",
            first.predictor_names(),
            first.outcome_names(),
            bad.predictor_names(),
            bad.outcome_names()
        )));
    }
    let n: usize = parts.iter().map(|d| d.n_subjects()).sum();
    let p = first.n_predictors();
    let mut covariates = nalgebra::DMatrix::zeros(n, p);
    let mut row = 0;
    for d in parts {
        covariates.rows_mut(row, d.n_subjects()).copy_from(d.covariates());
        row += d.n_subjects();
    }
    let outcomes = (0..first.n_outcomes())
        .map(|k| {
            let time = parts.iter().flat_map(|d| d.outcomes()[k].time.iter().copied()).collect();
            let event = parts.iter().flat_map(|d| d.outcomes()[k].event.iter().copied()).collect();
            OutcomeColumn::new(time, event)
        })
        .collect::<Result<Vec<_>>>()?;
    SurvivalDataset::new(
        covariates,
        outcomes,
        first.predictor_names().to_vec(),
        first.outcome_names().to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn small(n: usize, offset: f64, events: &[bool]) -> SurvivalDataset {
        let x = DMatrix::from_fn(n, 2, |i, j| offset + (i * 2 + j) as f64);
        let time = (0..n).map(|i| 1.0 + i as f64).collect();
        SurvivalDataset::unnamed(x, vec![OutcomeColumn::new(time, events.to_vec()).unwrap()]).unwrap()
    }

    #[test]
    fn pooled_counts() {
        let a = small(3, 0.0, &[true, false, true]);
        let b = small(4, 100.0, &[true, true, true, false]);
        let pooled = pool_datasets(&a, &b).unwrap();
        assert_eq!(pooled.n_subjects(), 7);
        assert_eq!(pooled.event_counts(), vec![2 + 3]);
        assert_eq!(pooled.covariates()[(3, 0)], 100.0);
        assert_eq!(pool_many(&[&a]).unwrap(), a);
    }

    #[test]
    fn schema_mismatch() {
        let a = small(3, 0.0, &[true, false, true]);
        let b = a
            .with_covariates(a.covariates().clone(), vec!["u".into(), "v".into()])
            .unwrap();
        assert!(matches!(pool_datasets(&a, &b), Err(CoxError::Schema(_))));
    }
}
