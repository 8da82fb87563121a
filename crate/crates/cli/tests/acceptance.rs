//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use stoconv_cli::config::{
    ExperimentConfig, DEFAULT_BOUNDS_AUDIT, DEFAULT_CONVERGENCE, DEFAULT_SELFTEST,
};
use stoconv_cli::{run_bounds_audit, run_convergence_study, Report, Row, Verdict};
use stoconv_core::bounds::{implied_spatial_slope, spectral_tail_check};
use stoconv_core::noise::spatial_truncation_error;
use stoconv_core::oracles::{
    check_drift_identity, check_shipped_taming, covariance_vs_quadrature, sampler_covariance_check,
    TamingCheck,
};
use stoconv_core::representation::representation_gaps;
use stoconv_core::scheme::truncation_defect;
use stoconv_core::{
    fit_rate, uniform_grid, CoupledSimulator, NoiseOperator, ProjectionIndex, SpectralOperator,
    TruncationPolicy,
};

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn param(row: &Row, key: &str) -> Option<f64> {
    row.parameters.split(';').find_map(|kv| {
        let (k, v) = kv.split_once('=')?;
        (k == key).then(|| v.parse().ok()).flatten()
    })
}

fn rows<'a>(report: &'a Report, quantity: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
    report.rows.iter().filter(move |r| r.quantity == quantity)
}

fn temporal_rate() -> Outcome {
    let cfg = ExperimentConfig::from_toml(DEFAULT_CONVERGENCE).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let start = Instant::now();
    let report = pool.install(|| run_convergence_study(&cfg)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let fit = report.fits.iter().find(|f| f.name == "temporal").unwrap();
    let passed = (-0.6..=-0.4).contains(&fit.slope) && fit.r_squared >= 0.98 && secs < 300.0;
    Outcome {
        id: 1,
        name: "temporal rate",
        passed,
        detail: format!(
            "slope {:.4} ± {:.4} (need [-0.60, -0.40]), r² {:.4} (need ≥ 0.98), {secs:.1}s single-threaded",
            fit.slope, fit.slope_std_error, fit.r_squared
        ),
    }
}

fn spatial_tail() -> Outcome {
    let cfg = ExperimentConfig::from_toml(DEFAULT_CONVERGENCE).unwrap();
    let op = cfg.build_operator().unwrap();
    let b = cfg.build_noise(&op).unwrap();
    let mut tail_ok = true;
    let mut worst_ratio = 0.0f64;
    let mut by_scale = Vec::new();
    let mut by_n = Vec::new();
    for n in [2usize, 4, 8, 16, 32] {
        for eta in [0.1, 0.25, 0.4] {
            let chk = spectral_tail_check(&op, &b, n, eta).unwrap();
            tail_ok &= chk.holds();
            worst_ratio = worst_ratio.max(chk.tail / chk.majorant);
        }
        let err = spatial_truncation_error(&op, &b, n, cfg.horizon);
        by_scale.push((op.tail_infimum(n).unwrap(), err));
        by_n.push((n as f64, err));
    }
    let growth = cfg.operator.growth_exponent().unwrap();
    let implied = implied_spatial_slope(cfg.noise.decay().unwrap(), growth).unwrap();
    let fit = fit_rate(&by_scale).unwrap();
    let fit_n = fit_rate(&by_n).unwrap();
    let passed = tail_ok && (fit.slope - implied).abs() <= 0.1;
    Outcome {
        id: 2,
        name: "spatial tail",
        passed,
        detail: format!(
            "tail check {} (largest tail/majorant {worst_ratio:.3}); slope vs |λ_(N+1)| {:.4} (implied {implied:.4} ± 0.1); slope vs N {:.4} (implied {:.4})",
            if tail_ok { "holds" } else { "violated" },
            fit.slope,
            fit_n.slope,
            implied * growth,
        ),
    }
}

fn exp_moments() -> Outcome {
    let mut cfg = ExperimentConfig::from_toml(DEFAULT_BOUNDS_AUDIT).unwrap();
    cfg.replications = 100_000;
    cfg.parameters.gamma = vec![0.0];
    cfg.parameters.rho = vec![0.25];
    cfg.parameters.eps = None;
    let report = run_bounds_audit(&cfg).unwrap();
    let row = rows(&report, "exp_moment_grid_sup").next().unwrap();
    let eps = param(row, "eps").unwrap();
    let eps_max = param(row, "eps_max").unwrap();
    let passed = row.verdict == Verdict::Pass && (eps - eps_max / 2.0).abs() <= 1e-9 * eps_max;
    Outcome {
        id: 3,
        name: "exponential moments",
        passed,
        detail: format!(
            "M=64 N=64 R=1e5 eps={eps:.4e}: {:.6} + 3·{:.2e} ≤ {:.6}",
            row.empirical,
            row.std_error,
            row.theoretical.unwrap()
        ),
    }
}

fn moment_bound(audit: &Report) -> Outcome {
    let mut gammas = Vec::new();
    let mut passed = true;
    let mut detail = Vec::new();
    for r in rows(audit, "moment_grid_sup") {
        let g = param(r, "gamma").unwrap();
        gammas.push(g);
        passed &= r.verdict == Verdict::Pass;
        detail.push(format!(
            "γ={g}: {:.4} + 3·{:.1e} ≤ {:.2}",
            r.empirical,
            r.std_error,
            r.theoretical.unwrap_or(f64::NAN)
        ));
    }
    passed &= gammas == [0.0, 0.25];
    Outcome {
        id: 4,
        name: "moment bound",
        passed,
        detail: format!("R=1e4, {}", detail.join("; ")),
    }
}

fn holder_bound(audit: &Report) -> Outcome {
    let mut rhos = Vec::new();
    let mut passed = true;
    let mut detail = Vec::new();
    for r in rows(audit, "holder_quotient").filter(|r| param(r, "gamma") == Some(0.0)) {
        let rho = param(r, "rho").unwrap();
        rhos.push(rho);
        passed &= r.verdict == Verdict::Pass && param(r, "pairs") == Some(20.0);
        detail.push(format!(
            "ρ={rho}: {:.4} + 3·{:.1e} ≤ {:.2}",
            r.empirical,
            r.std_error,
            r.theoretical.unwrap_or(f64::NAN)
        ));
    }
    passed &= rhos == [0.1, 0.25, 0.45];
    Outcome {
        id: 5,
        name: "Hölder bound",
        passed,
        detail: format!("R=1e4, 20 node pairs, {}", detail.join("; ")),
    }
}

fn taming_calculus() -> Outcome {
    let cfg = TamingCheck {
        seed: 11,
        ..TamingCheck::default()
    };
    let fd = check_shipped_taming(&cfg);
    let drift = check_drift_identity(100, 5, 10.0, 12, 1e-12);
    let central: Vec<_> = fd
        .iter()
        .filter(|o| o.name.ends_with("central_difference"))
        .collect();
    let passed = central.len() == 2 && central.iter().all(|o| o.passed()) && drift.passed();
    Outcome {
        id: 6,
        name: "taming calculus",
        passed,
        detail: format!(
            "{}; drift identity {:.2e} (≤ 1e-12)",
            central
                .iter()
                .map(|o| format!("{} {:.2e} (≤ {:.0e})", o.name, o.measured, o.tolerance))
                .collect::<Vec<_>>()
                .join("; "),
            drift.measured
        ),
    }
}

fn exact_coupling() -> Outcome {
    let selftest = ExperimentConfig::from_toml(DEFAULT_SELFTEST).unwrap();
    let op4 = selftest.build_operator().unwrap();
    let b4 = selftest.build_noise(&op4).unwrap();
    let cases = [
        ("heat-4", op4, b4, 0.25),
        (
            "rank-deficient",
            SpectralOperator::new(vec![-1.0, -4.0, -9.0]).unwrap(),
            NoiseOperator::new(3, 2, vec![1.0, 0.5, 0.0, 1.0, 0.3, -0.2], 0.0).unwrap(),
            0.25,
        ),
    ];
    let mut passed = true;
    let mut detail = Vec::new();
    for (k, (name, op, b, h)) in cases.iter().enumerate() {
        let q = covariance_vs_quadrature(op, b, *h, 4096, 10_000, 100 + k as u64).unwrap();
        let s = sampler_covariance_check(op, b, *h, 100_000, 200 + k as u64).unwrap();
        passed &= q.within(5.0) && s.within(5.0);
        detail.push(format!(
            "{name}: quadrature max z {:.2}, sampler max z {:.2}",
            q.max_z, s.max_z
        ));
    }
    Outcome {
        id: 7,
        name: "exact coupling",
        passed,
        detail: format!("need ≤ 5; {}", detail.join("; ")),
    }
}

fn representation() -> Outcome {
    let cfg = ExperimentConfig::from_toml(DEFAULT_SELFTEST).unwrap();
    let op = cfg.build_operator().unwrap();
    let b = cfg.build_noise(&op).unwrap();
    let grid = uniform_grid(cfg.horizon, 4).unwrap();
    let all_h = ProjectionIndex::all(op.dim());
    let all_u = ProjectionIndex::all(b.u_dim());
    let sim =
        CoupledSimulator::new(&op, &b, all_h, all_u, &grid, TruncationPolicy::Identity).unwrap();
    let gaps = representation_gaps(&sim, &[16, 64, 256], 2000, 31).unwrap();
    let values: Vec<f64> = gaps.iter().map(|g| g.gap.value).collect();
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    let passed = op.dim() == 4 && monotone && values[2] < 0.05;
    Outcome {
        id: 8,
        name: "mild Itô representation",
        passed,
        detail: format!(
            "N=4 M=4 R=2000, gaps at S=16/64/256: {:.3e} / {:.3e} / {:.3e} (decreasing, last < 0.05)",
            values[0], values[1], values[2]
        ),
    }
}

fn truncation_defect_exact() -> Outcome {
    let op = SpectralOperator::new(vec![-1.0]).unwrap();
    let b = NoiseOperator::new(1, 1, vec![1.0], 0.0).unwrap();
    let all = ProjectionIndex::all(1);
    let horizon = 1.0;
    let (p, rho) = (2.0, 0.25);
    let mut worst = 0.0f64;
    let mut identity = 0.0f64;
    for m in 2..=1024usize {
        let grid = uniform_grid(horizon, m).unwrap();
        let policy = TruncationPolicy::calibrated_bernoulli(1.0, horizon, m, p, rho);
        let sim = CoupledSimulator::new(&op, &b, all.clone(), all.clone(), &grid, policy).unwrap();
        worst = worst
            .max((truncation_defect(&sim, p, rho, 1, 0).unwrap() - horizon.powf(p * rho)).abs());
        let id = CoupledSimulator::new(
            &op,
            &b,
            all.clone(),
            all.clone(),
            &grid,
            TruncationPolicy::Identity,
        )
        .unwrap();
        identity = identity.max(truncation_defect(&id, p, rho, 1, 0).unwrap().abs());
    }
    Outcome {
        id: 9,
        name: "truncation defect",
        passed: worst <= 1e-12 && identity == 0.0,
        detail: format!(
            "M=2..1024: Bernoulli |defect - T^(pρ)| ≤ {worst:.1e} (need 1e-12), identity defect {identity}"
        ),
    }
}

fn run_binary(args: &[&str], out: &Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_stoconv"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    assert!(
        status.code() == Some(0) || status.code() == Some(1),
        "{status}"
    );
    std::fs::read(out).unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut passed = true;
    let mut detail = Vec::new();
    for cmd in ["selftest", "convergence"] {
        let a = run_binary(
            &[cmd, "--threads", "1"],
            &dir.path().join(format!("{cmd}-a.csv")),
        );
        let b = run_binary(
            &[cmd, "--threads", "3"],
            &dir.path().join(format!("{cmd}-b.csv")),
        );
        let c = run_binary(&[cmd], &dir.path().join(format!("{cmd}-c.csv")));
        let same = a == b && b == c && !a.is_empty();
        passed &= same;
        detail.push(format!(
            "{cmd} {} bytes {}",
            a.len(),
            if same { "identical" } else { "differ" }
        ));
    }
    Outcome {
        id: 10,
        name: "determinism",
        passed,
        detail: format!("three runs each; {}", detail.join("; ")),
    }
}

fn main() {
    let audit =
        run_bounds_audit(&ExperimentConfig::from_toml(DEFAULT_BOUNDS_AUDIT).unwrap()).unwrap();
    let outcomes = [
        temporal_rate(),
        spatial_tail(),
        exp_moments(),
        moment_bound(&audit),
        holder_bound(&audit),
        taming_calculus(),
        exact_coupling(),
        representation(),
        truncation_defect_exact(),
        determinism(),
    ];
    for o in &outcomes {
        println!(
            "{} criterion {:>2} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        outcomes.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
