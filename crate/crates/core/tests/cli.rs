use std::path::Path;
use std::process::Command;

use corecox::cli::{cmd_benchmark, cmd_fit, cmd_simulate, write_cohort_csv, ExperimentConfig, ModelArtifact, Study};
use corecox::evaluation::Method;
use corecox::simulation::{generate, SimConfig};

const SMALL: &str = r#"{
  "simulation": {"n_source": 1500, "n_target": 120, "p": 5, "k": 3, "true_rank": 2, "rng_seed": 5},
  "methods": ["Cox", "CORE-Cox"],
  "seeds": [0, 1],
  "cv": {"outer_folds": 3, "inner_folds": 3},
  "grid": {"ranks": [1, 2], "residual_lambdas": [0.01, 0.1, 1.0]},
  "fit": {"hazard_ratios": true},
  "bootstrap": {"n_boot": 100},
  "recovery": {"n_replicates": 10, "inner_folds": 3, "methods": ["Cox", "LR-MTL-Source", "CORE-Cox"], "grid": {"ranks": [2], "residual_lambdas": [0.01, 0.1]}},
  "coverage": {"n_experiments": 3, "n_boot": 100, "inner_folds": 3, "grid": {"ranks": [2], "residual_lambdas": [0.01, 0.1]}}
}"#;

fn config() -> ExperimentConfig {
    ExperimentConfig::from_json(SMALL).unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn assert_stamped(path: &Path, fingerprint: &str) {
    let text = String::from_utf8(read(path)).unwrap();
    assert!(text.contains(fingerprint), "{} lacks the fingerprint", path.display());
    assert!(
        text.contains("corecox-format=1") || text.contains("\"format_version\": 1"),
        "{} lacks the format version",
        path.display()
    );
}

#[test]
fn benchmark_is_deterministic_and_stamped() {
    let cfg = config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let summary = cmd_benchmark(&cfg, a.path()).unwrap();
    cmd_benchmark(&cfg, b.path()).unwrap();
    for f in ["metrics.csv", "summary.json", "manifest.json"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f} differs between runs");
        assert_stamped(&a.path().join(f), &cfg.fingerprint());
    }
    assert_eq!(summary.methods.len(), 2);
    assert!(summary.methods.iter().all(|m| m.per_outcome.len() == 3 && m.completeness == 1.0));
    let core = summary.method(Method::CoreCox).unwrap();
    assert!(core.paired_difference_vs_cox.as_ref().unwrap().n_pairs == 6);
    // header comment + column names + one row per (seed, fold, method, outcome)
    let lines = String::from_utf8(read(&a.path().join("metrics.csv"))).unwrap().lines().count();
    assert_eq!(lines, 2 + 2 * 3 * 2 * 3);
}

#[test]
fn fit_artifact_round_trips_and_reproduces() {
    let cfg = config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let artifact = cmd_fit(&cfg, Method::CoreCox, a.path()).unwrap();
    cmd_fit(&cfg, Method::CoreCox, b.path()).unwrap();

    let loaded = ModelArtifact::load(&a.path().join("model.json")).unwrap();
    assert_eq!(loaded, artifact);
    let (m1, m2) = (artifact.coefficient_matrix().unwrap(), loaded.coefficient_matrix().unwrap());
    assert!(m1.values.iter().zip(m2.values.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(loaded.config_fingerprint, cfg.fingerprint());

    let parts = loaded.transfer.as_ref().unwrap();
    for k in 0..loaded.coefficients.len() {
        for j in 0..loaded.predictor_names.len() {
            let sum = parts.source_coefficients[k][j] + parts.residual[k][j];
            assert_eq!(sum.to_bits(), loaded.coefficients[k][j].to_bits());
        }
    }
    // Tuned hyperparameters are part of the artifact and reproduce exactly.
    assert!(loaded.hyperparameters.residual_lambda.is_some());
    for f in ["model.json", "coefficients.csv", "hazard_ratios.csv", "manifest.json"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f} differs between runs");
        assert_stamped(&a.path().join(f), &cfg.fingerprint());
    }
}

#[test]
fn fit_accepts_fixed_hyperparameters() {
    let mut cfg = config();
    cfg.fit.hazard_ratios = false;
    cfg.fit.hyperparameters = Some(corecox::evaluation::Hyperparameters { lambda: Some(0.1), ..Default::default() });
    let dir = tempfile::tempdir().unwrap();
    let artifact = cmd_fit(&cfg, Method::CoxRidge, dir.path()).unwrap();
    assert_eq!(artifact.hyperparameters.lambda, Some(0.1));
    assert!(artifact.inner_score.is_none());
    assert!(!dir.path().join("hazard_ratios.csv").exists());
}

#[test]
fn simulate_tables_are_reproducible() {
    let cfg = config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = cmd_simulate(&cfg, Study::Both, a.path()).unwrap();
    cmd_simulate(&cfg, Study::Both, b.path()).unwrap();
    for f in ["recovery.csv", "recovery_summary.json", "coverage.csv", "coverage_summary.json", "summary.txt"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f} differs between runs");
        assert_stamped(&a.path().join(f), &cfg.fingerprint());
    }
    let coverage = out.coverage.unwrap();
    assert_eq!(coverage.summary.len(), 2);
    let text = String::from_utf8(read(&a.path().join("summary.txt"))).unwrap();
    assert!(text.contains("Generative assumptions") && text.contains("Standardization"));
}

#[test]
fn simulate_requires_a_simulation_section() {
    let cfg = ExperimentConfig::from_json(r#"{"data": {"target": "t.csv"}}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(cmd_simulate(&cfg, Study::Recovery, dir.path()).is_err());
}

fn write_cohorts(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let cohorts = generate(&SimConfig { n_source: 300, n_target: 80, p: 4, k: 2, ..SimConfig::default() }).unwrap();
    let ids = |n: usize| (0..n).map(|i| format!("r{i}")).collect::<Vec<_>>();
    let (s, t) = (dir.join("source.csv"), dir.join("target.csv"));
    write_cohort_csv(&s, &ids(300), &cohorts.source).unwrap();
    write_cohort_csv(&t, &ids(80), &cohorts.target).unwrap();
    (s, t)
}

#[test]
fn binary_validates_data_and_runs_from_csv_config() {
    let bin = env!("CARGO_BIN_EXE_corecox");
    let dir = tempfile::tempdir().unwrap();
    let (s, t) = write_cohorts(dir.path());

    let ok = Command::new(bin).args(["validate-data", "--source"]).arg(&s).arg("--target").arg(&t).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("predictors (4)") && stdout.contains("target: 80 subjects"), "{stdout}");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,x1,x2,x3,x4,time_y1\na,1,2,3,4,5\n").unwrap();
    let err = Command::new(bin).args(["validate-data", "--source"]).arg(&s).arg("--target").arg(&bad).output().unwrap();
    assert!(!err.status.success());
    assert!(String::from_utf8_lossy(&err.stderr).contains("event_y1"));

    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"data": {"source": "source.csv", "target": "target.csv"}, "methods": ["Cox", "CORE-Cox"],
            "cv": {"outer_folds": 3, "inner_folds": 3}, "grid": {"ranks": [1], "residual_lambdas": [0.1]}}"#,
    )
    .unwrap();
    let out = dir.path().join("bench");
    let run = Command::new(bin)
        .args(["--jobs", "2", "benchmark", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let manifest = String::from_utf8(read(&out.join("manifest.json"))).unwrap();
    assert!(manifest.contains("source-cohort statistics"));

    let fit = Command::new(bin)
        .args(["fit", "--config"])
        .arg(&config)
        .args(["--method", "core-cox", "--out"])
        .arg(dir.path().join("fit"))
        .output()
        .unwrap();
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let model = ModelArtifact::load(&dir.path().join("fit/model.json")).unwrap();
    assert!(model.standardizer.is_some());

    let unknown = Command::new(bin).args(["fit", "--config"]).arg(&config).args(["--method", "svm"]).output().unwrap();
    assert!(!unknown.status.success());
}
