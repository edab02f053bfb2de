use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoxError, Result};
use crate::rng::stream;
use crate::survival::SurvivalDataset;

/// Number of highest-prevalence outcomes whose event pattern forms the
/// stratification key.
const STRATA_OUTCOMES: usize = 3;

const TAG_OUTER: u64 = 0x6f75_7465_72;
const TAG_INNER: u64 = 0x696e_6e65_72;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CVPlan {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub stratify_by_event: bool,
}

impl Default for CVPlan {
    fn default() -> Self {
        Self { outer_folds: 5, inner_folds: 4, seed: 0, stratify_by_event: true }
    }
}

impl CVPlan {
    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(CoxError::Config(format!(
                "need at least 2 outer and inner folds, got {}/{}",
                self.outer_folds, self.inner_folds
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Outer fold assignment of the target subjects. Depends only on the seed
    /// and the event indicators, never on covariates or methods.
    pub fn outer_assignment(&self, target: &SurvivalDataset) -> Result<FoldAssignment> {
        assign_folds(target, self.outer_folds, stream(self.seed, &[TAG_OUTER]).random(), self.stratify_by_event)
    }

    /// Inner fold assignment of an outer-training set.
    pub fn inner_assignment(&self, training: &SurvivalDataset, outer_fold: usize) -> Result<FoldAssignment> {
        let seed = stream(self.seed, &[TAG_INNER, outer_fold as u64]).random();
        assign_folds(training, self.inner_folds, seed, self.stratify_by_event)
    }
}

/// Fold index per subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub folds: Vec<usize>,
    pub n_folds: usize,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    /// SHA-256 of the membership of one fold, as hex.
    pub fn fold_hash(&self, fold: usize) -> String {
        let mut hasher = Sha256::new();
        for i in self.test_rows(fold) {
            hasher.update((i as u64).to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Splits subjects into `n_folds` folds. With stratification, subjects are
/// grouped by their event pattern over the three most prevalent outcomes,
/// each group is shuffled, and groups are dealt round-robin so every fold gets
/// a share of each pattern.
pub fn assign_folds(
    data: &SurvivalDataset,
    n_folds: usize,
    seed: u64,
    stratify: bool,
) -> Result<FoldAssignment> {
    let n = data.n_subjects();
    if n_folds < 2 || n < n_folds {
        return Err(CoxError::InvalidArgument(format!(
            "cannot split {n} subjects into {n_folds} folds"
        )));
    }
    let mut prevalence: Vec<(usize, usize)> =
        data.event_counts().into_iter().enumerate().map(|(k, c)| (k, c)).collect();
    prevalence.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let key_outcomes: Vec<usize> = if stratify {
        prevalence.iter().take(STRATA_OUTCOMES).map(|(k, _)| *k).collect()
    } else {
        Vec::new()
    };

    let mut strata: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key = key_outcomes
            .iter()
            .enumerate()
            .fold(0u32, |acc, (bit, &k)| acc | (u32::from(data.outcomes()[k].event[i]) << bit));
        strata.entry(key).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; n];
    let mut next = 0;
    for members in strata.values_mut() {
        for i in (1..members.len()).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        for &subject in members.iter() {
            folds[subject] = next % n_folds;
            next += 1;
        }
    }
    Ok(FoldAssignment { folds, n_folds })
}
