use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use corecox::cli::{ingest_csv, write_cohort_csv, ExperimentConfig};
use corecox::estimators::PenaltySpec;
use corecox::evaluation::{harrell_c_index, percentile_intervals, top_k_lift};
use corecox::estimators::fit_lowrank_mtl;
use corecox::survival::{neg_log_partial_likelihood, plik_gradient, CoxProblem, OutcomeColumn, SurvivalDataset};
use corecox::transfer::fit_residual_stage;

/// Survival data with coarse times so ties are common.
fn survival() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>)> {
    (4usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec((1u8..8).prop_map(f64::from), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec((-20i32..20).prop_map(|v| f64::from(v) / 4.0), n),
        )
    })
}

fn dataset() -> impl Strategy<Value = (SurvivalDataset, DVector<f64>)> {
    (5usize..40, 1usize..5).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * p),
            prop::collection::vec((1u8..10).prop_map(f64::from), n),
            prop::collection::vec(prop::bool::weighted(0.7), n),
            prop::collection::vec(-1.0f64..1.0, p),
        )
            .prop_filter_map("needs an event", move |(x, t, mut e, b)| {
                e[0] = true;
                let data = SurvivalDataset::unnamed(
                    DMatrix::from_row_slice(n, p, &x),
                    vec![OutcomeColumn::new(t, e).ok()?],
                )
                .ok()?;
                Some((data, DVector::from_vec(b)))
            })
    })
}

proptest! {
    #[test]
    fn c_index_ignores_monotone_transforms((time, event, score) in survival()) {
        let Ok(c) = harrell_c_index(&time, &event, &score) else { return Ok(()) };
        let transformed: Vec<f64> = score.iter().map(|s| (s / 3.0).exp() * 2.0 - 7.0).collect();
        prop_assert_eq!(c, harrell_c_index(&time, &event, &transformed).unwrap());
        let negated: Vec<f64> = score.iter().map(|s| -s).collect();
        let reflected = harrell_c_index(&time, &event, &negated).unwrap();
        prop_assert!((c + reflected - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn lift_ignores_monotone_transforms((time, event, score) in survival(), fraction in 0.05f64..0.95) {
        let Ok(lift) = top_k_lift(&time, &event, &score, fraction) else { return Ok(()) };
        let transformed: Vec<f64> = score.iter().map(|s| s * 5.0 + 1.0).collect();
        prop_assert_eq!(lift, top_k_lift(&time, &event, &transformed, fraction).unwrap());
        let events = event.iter().filter(|e| **e).count() as f64;
        prop_assert!(lift >= 0.0 && lift <= event.len() as f64 / events + 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences((data, beta) in dataset()) {
        let grad = plik_gradient(&data, 0, &beta).unwrap();
        for j in 0..beta.len() {
            let h = 1e-5;
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (neg_log_partial_likelihood(&data, 0, &up).unwrap()
                - neg_log_partial_likelihood(&data, 0, &down).unwrap())
                / (2.0 * h);
            prop_assert!((fd - grad[j]).abs() <= 1e-6 * grad[j].abs().max(1.0), "j={} fd={} grad={}", j, fd, grad[j]);
        }
    }

    #[test]
    fn likelihood_ignores_row_order((data, beta) in dataset(), seed in any::<u64>()) {
        let n = data.n_subjects();
        let mut rows: Vec<usize> = (0..n).collect();
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            rows.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let permuted = data.select_rows(&rows).unwrap();
        let a = neg_log_partial_likelihood(&data, 0, &beta).unwrap();
        let b = neg_log_partial_likelihood(&permuted, 0, &beta).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn likelihood_is_midpoint_convex((data, a) in dataset(), shift in prop::collection::vec(-2.0f64..2.0, 4)) {
        let b = DVector::from_fn(a.len(), |j, _| a[j] + shift[j % shift.len()]);
        let mid = (&a + &b) / 2.0;
        let f = |v: &DVector<f64>| neg_log_partial_likelihood(&data, 0, v).unwrap();
        prop_assert!(f(&mid) <= (f(&a) + f(&b)) / 2.0 + 1e-10);
    }

    #[test]
    fn one_term_per_event((data, _) in dataset(), flip in any::<prop::sample::Index>()) {
        let problem = CoxProblem::new(&data, 0).unwrap();
        let events = data.outcomes()[0].event_count();
        prop_assert_eq!(problem.n_terms(), events);
        let mut outcome = data.outcomes()[0].clone();
        let i = flip.index(outcome.len());
        if outcome.event[i] && events > 1 {
            outcome.event[i] = false;
            let censored = SurvivalDataset::unnamed(data.covariates().clone(), vec![outcome]).unwrap();
            prop_assert_eq!(CoxProblem::new(&censored, 0).unwrap().n_terms(), events - 1);
        }
    }

    #[test]
    fn likelihood_depends_on_time_order_only((data, beta) in dataset(), offset in 0.5f64..100.0) {
        let mut outcome = data.outcomes()[0].clone();
        outcome.time.iter_mut().for_each(|t| *t += offset);
        let shifted = SurvivalDataset::unnamed(data.covariates().clone(), vec![outcome]).unwrap();
        let a = neg_log_partial_likelihood(&data, 0, &beta).unwrap();
        let b = neg_log_partial_likelihood(&shifted, 0, &beta).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn intervals_contain_the_point_estimate(
        point in -3.0f64..3.0,
        draws in prop::collection::vec(-5.0f64..5.0, 5..60),
        level in 0.5f64..0.99,
    ) {
        let reps: Vec<DVector<f64>> = draws.iter().map(|&d| DVector::from_element(1, d)).collect();
        let (lo, hi) = percentile_intervals(&DVector::from_element(1, point), &reps, level)[0];
        prop_assert!(lo <= point && point <= hi);
    }

    #[test]
    fn fingerprint_ignores_key_order(order in Just(vec![0usize, 1, 2, 3, 4]).prop_shuffle()) {
        let entries = [
            r#""simulation": {"n_source": 300, "n_target": 80, "p": 4, "k": 3, "true_rank": 1}"#,
            r#""methods": ["Cox", "CORE-Cox"]"#,
            r#""seeds": [3, 1]"#,
            r#""grid": {"residual_lambdas": [0.1, 1.0], "ranks": [1, 2]}"#,
            r#""cv": {"inner_folds": 3, "outer_folds": 4}"#,
        ];
        let canonical = format!("{{{}}}", entries.join(","));
        let shuffled = format!("{{{}}}", order.iter().map(|&i| entries[i]).collect::<Vec<_>>().join(","));
        prop_assert_eq!(
            ExperimentConfig::from_json(&canonical).unwrap().fingerprint(),
            ExperimentConfig::from_json(&shuffled).unwrap().fingerprint()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ingestion_is_idempotent((data, _) in dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = (0..data.n_subjects()).map(|i| format!("s{i}")).collect();
        let first = dir.path().join("a.csv");
        write_cohort_csv(&first, &ids, &data).unwrap();
        let Ok((once, _)) = ingest_csv(&first, None) else { return Ok(()) };
        let second = dir.path().join("b.csv");
        write_cohort_csv(&second, &once.ids, &once.data).unwrap();
        let (twice, _) = ingest_csv(&second, None).unwrap();
        let diff = (once.data.covariates() - twice.data.covariates()).abs().max();
        prop_assert!(diff <= 1e-12, "max difference {}", diff);
        prop_assert_eq!(once.data.outcomes(), twice.data.outcomes());
    }

    #[test]
    fn residual_shrinks_monotonically_toward_source(seed in 0u64..1000) {
        use corecox::simulation::{generate, SimConfig};
        let cohorts = generate(&SimConfig {
            n_source: 400, n_target: 60, p: 4, k: 3, true_rank: 1, shift_sparsity: 0.25,
            rng_seed: seed, ..SimConfig::default()
        }).unwrap();
        let stage1 = fit_lowrank_mtl(&cohorts.source, 1, PenaltySpec::l2(1e-3)).unwrap();
        let mut last = f64::INFINITY;
        for lambda in [0.001, 0.01, 0.1, 1.0, 10.0] {
            let fit = fit_residual_stage(&stage1, &cohorts.target, PenaltySpec::l2(lambda)).unwrap();
            let norm = fit.residual.norm();
            prop_assert!(norm <= last * (1.0 + 1e-6) + 1e-9, "lambda {} norm {} after {}", lambda, norm, last);
            last = norm;
        }
        let l1 = fit_residual_stage(&stage1, &cohorts.target, PenaltySpec::l1(1e6)).unwrap();
        prop_assert!(l1.residual.iter().all(|v| *v == 0.0));
    }
}
