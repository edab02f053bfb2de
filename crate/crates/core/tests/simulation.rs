use corecox::estimators::{fit_cox, PenaltySpec};
use corecox::evaluation::{bootstrap_hazard_ratios, BootstrapOptions, HyperGrid, Method};
use corecox::simulation::{generate, run_recovery_study, RecoveryOptions, SimConfig};
use corecox::rng::derive_seed;

fn fixed_grid() -> HyperGrid {
    HyperGrid { ranks: vec![2], residual_lambdas: vec![0.05], ..HyperGrid::default() }
}

fn small(shift_magnitude: f64) -> SimConfig {
    SimConfig { n_source: 3000, n_target: 150, p: 6, k: 4, shift_magnitude, rng_seed: 31, ..SimConfig::default() }
}

#[test]
fn source_only_error_grows_with_shift() {
    let options = RecoveryOptions {
        methods: vec![Method::LrMtlSource],
        grid: fixed_grid(),
        n_replicates: 10,
        ..RecoveryOptions::default()
    };
    let means: Vec<f64> = [0.0, 0.2, 0.4, 0.8]
        .iter()
        .map(|&m| run_recovery_study(&small(m), &options).unwrap().summary_for(Method::LrMtlSource).unwrap().mean)
        .collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
}

#[test]
fn without_shift_core_cox_matches_source_only() {
    let options = RecoveryOptions {
        methods: vec![Method::LrMtlSource, Method::CoreCox],
        grid: HyperGrid { ranks: vec![2], ..HyperGrid::default() },
        n_replicates: 10,
        ..RecoveryOptions::default()
    };
    let study = run_recovery_study(&small(0.0), &options).unwrap();
    let a = study.summary_for(Method::LrMtlSource).unwrap();
    let b = study.summary_for(Method::CoreCox).unwrap();
    assert!((a.mean - b.mean).abs() <= a.standard_error + b.standard_error, "{a:?} {b:?}");
}

#[test]
fn large_target_without_shift_is_recovered_by_both() {
    let config = SimConfig {
        n_source: 3000,
        n_target: 2000,
        p: 5,
        k: 3,
        shift_magnitude: 0.0,
        rng_seed: 4,
        ..SimConfig::default()
    };
    let options = RecoveryOptions {
        methods: vec![Method::Cox, Method::CoreCox],
        grid: HyperGrid { ranks: vec![2], ..HyperGrid::default() },
        n_replicates: 10,
        ..RecoveryOptions::default()
    };
    let study = run_recovery_study(&config, &options).unwrap();
    let cox = study.summary_for(Method::Cox).unwrap().mean;
    let core = study.summary_for(Method::CoreCox).unwrap().mean;
    assert!(cox < 0.1, "Cox rrmse {cox}");
    assert!(core <= cox + 0.02, "CORE-Cox {core} vs Cox {cox}");
}

#[test]
fn single_method_table_has_one_row_per_replicate() {
    let options = RecoveryOptions { methods: vec![Method::Cox], n_replicates: 10, ..RecoveryOptions::default() };
    let config = SimConfig { n_source: 100, ..small(0.3) };
    let study = run_recovery_study(&config, &options).unwrap();
    assert_eq!(study.rows.len(), 10);
    assert!(study.rows.iter().enumerate().all(|(i, r)| r.replicate == i && r.method == Method::Cox));
    assert!(run_recovery_study(&config, &RecoveryOptions { n_replicates: 9, ..options }).is_err());
}

#[test]
fn intermediate_shrinkage_beats_both_endpoints_for_most_replicates() {
    use corecox::estimators::fit_lowrank_mtl;
    use corecox::transfer::fit_residual_stage;
    let mut wins = 0;
    let replicates = 10;
    for r in 0..replicates {
        let cohorts = generate(&small(0.4).with_seed(500 + r)).unwrap();
        let stage1 = fit_lowrank_mtl(&cohorts.source, 2, PenaltySpec::l2(1e-3)).unwrap();
        let truth = &cohorts.truth.b_target_true;
        let error = |lambda: f64| {
            let penalty = if lambda == 0.0 { PenaltySpec::NONE } else { PenaltySpec::l1(lambda) };
            let fit = fit_residual_stage(&stage1, &cohorts.target, penalty).unwrap();
            (&fit.target_matrix.values - truth).norm()
        };
        let (target_only, source_only) = (error(0.0), error(1e6));
        let best_inside = [0.01, 0.03, 0.1].iter().map(|&l| error(l)).fold(f64::INFINITY, f64::min);
        wins += usize::from(best_inside < target_only && best_inside < source_only);
    }
    assert!(2 * wins > replicates as usize, "{wins}/{replicates}");
}

#[test]
fn null_association_intervals_cover_one() {
    let config = SimConfig {
        n_source: 10,
        n_target: 200,
        p: 2,
        k: 1,
        true_rank: 1,
        shift_sparsity: 0.0,
        ..SimConfig::default()
    };
    let experiments = 200;
    let mut covered = 0;
    let mut total = 0;
    for e in 0..experiments {
        let cohorts = generate(&config.with_seed(derive_seed(12, &[e]))).unwrap();
        // Permuting rows of the outcome against the covariates gives a true null.
        let n = cohorts.target.n_subjects();
        let rows: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let shuffled = cohorts.target.select_rows(&rows).unwrap();
        let null = cohorts.target.with_covariates(shuffled.covariates().clone(), shuffled.predictor_names().to_vec()).unwrap();
        let options = BootstrapOptions { n_boot: 200, level: 0.95, seed: derive_seed(13, &[e]) };
        let rows = bootstrap_hazard_ratios(|d, k| fit_cox(d, k).map(|f| f.beta), &null, 0, "Cox", &options).unwrap();
        for row in rows {
            total += 1;
            covered += usize::from(row.ci_low <= 1.0 && 1.0 <= row.ci_high);
        }
    }
    let coverage = covered as f64 / total as f64;
    assert!((coverage - 0.95).abs() <= 0.03, "coverage {coverage}");
}
