use std::process::Command;

use stoconv_cli::config::{
    ExperimentConfig, DEFAULT_BOUNDS_AUDIT, DEFAULT_CONVERGENCE, DEFAULT_SELFTEST,
};
use stoconv_cli::experiments::run_selftest_with;
use stoconv_cli::{run_bounds_audit, run_convergence_study, run_selftest, Verdict};
use stoconv_core::taming::{psi_double_prime_apply, psi_prime_apply};
use stoconv_core::{NoiseSpec, StateVector};

fn small(text: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(text).unwrap();
    cfg.operator = toml::from_str("rule = \"dirichlet-laplacian\"\nmodes = 8").unwrap();
    cfg.projections.retain(|p| p.modes < 8);
    cfg.projections.push(stoconv_cli::config::Projection {
        modes: 8,
        u_modes: None,
    });
    cfg
}

#[test]
fn single_grid_gives_no_temporal_fit() {
    let mut cfg = small(DEFAULT_CONVERGENCE);
    cfg.grids = vec![16];
    cfg.replications = 200;
    let report = run_convergence_study(&cfg).unwrap();
    assert!(report.fits.iter().all(|f| f.name != "temporal"));
    assert!(report
        .warnings
        .iter()
        .any(|w| w.contains("temporal sweep has 1 grid")));
    assert!(report
        .rows
        .iter()
        .any(|r| r.quantity == "lp_error_grid_sup"));
}

#[test]
fn zero_noise_audit_passes_trivially() {
    let mut cfg = small(DEFAULT_BOUNDS_AUDIT);
    cfg.replications = 200;
    cfg.grids = vec![8];
    cfg.noise = NoiseSpec::Diagonal {
        scale: 0.0,
        decay: 2.0,
        u_modes: None,
        beta: 0.0,
    };
    let report = run_bounds_audit(&cfg).unwrap();
    assert!(report.passed());
    for r in &report.rows {
        match r.quantity.as_str() {
            "exp_moment_grid_sup" => assert_eq!(r.empirical, 1.0),
            _ => assert_eq!(r.empirical, 0.0, "{r:?}"),
        }
    }
}

#[test]
fn eps_above_admissible_range_is_unbounded() {
    let mut cfg = small(DEFAULT_BOUNDS_AUDIT);
    cfg.replications = 200;
    cfg.grids = vec![8];
    cfg.parameters.eps = Some(10.0);
    let report = run_bounds_audit(&cfg).unwrap();
    let row = report
        .rows
        .iter()
        .find(|r| r.quantity == "exp_moment_grid_sup")
        .unwrap();
    assert_eq!(row.theoretical, Some(f64::INFINITY));
    assert_eq!(row.verdict, Verdict::Pass);
    assert!(report.warnings.iter().any(|w| w.contains("eps_max")));
}

#[test]
fn shipped_selftest_passes() {
    let report = run_selftest(&ExperimentConfig::from_toml(DEFAULT_SELFTEST).unwrap()).unwrap();
    assert!(report.passed(), "{}", report.csv_string());
}

#[test]
fn selftest_catches_a_sign_error_in_the_second_derivative() {
    let mut cfg = ExperimentConfig::from_toml(DEFAULT_SELFTEST).unwrap();
    cfg.selftest.covariance_paths = 1000;
    cfg.selftest.quadrature_paths = 200;
    cfg.selftest.quadrature_substeps = 64;
    let wrong = |z: &StateVector, u: &StateVector, v: &StateVector| {
        psi_double_prime_apply(z, u, v).scaled(-1.0)
    };
    let report = run_selftest_with(&cfg, &psi_prime_apply, &wrong).unwrap();
    let failed: Vec<_> = report.failures().map(|r| r.quantity.as_str()).collect();
    assert!(
        failed.contains(&"psi_double_prime_central_difference"),
        "{failed:?}"
    );
}

#[test]
fn binary_reports_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        DEFAULT_SELFTEST.replace("horizon = 1.0", "horizon = -1.0"),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_stoconv"))
        .args(["selftest", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`horizon`"));
}

#[test]
fn binary_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("selftest.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_stoconv"))
        .args(["selftest", "--seed", "5", "--out"])
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("experiment,quantity,steps,modes,parameters,"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["failed"], 0);
    assert_eq!(summary["time_supremum"], "grid nodes");
}
