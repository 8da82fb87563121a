//! Convergence study, bound audit and self-test drivers.
//!
//! Every `(experiment, M, N)` cell draws from its own seed derived from the
//! configured seed, and every path from its own stream inside the cell.

use std::collections::BTreeSet;

use rand::Rng;
use statrs::function::gamma::gamma;
use stoconv_core::bounds::{
    error_bound, error_bound_terms, exp_moment_bound, exp_moment_eps_max, holder_constant,
    implied_spatial_slope, moment_bound, spectral_tail_check, spectral_tail_hs,
};
use stoconv_core::estimators::{
    exp_moment_from_sq_norms, fit_rate, holder_from_samples, sup_root_mean, NodeAccumulator,
    NodePair, NodeSamples,
};
use stoconv_core::mc::{accumulate_paths, fold_paths};
use stoconv_core::noise::{convolution_tail_variance, spatial_truncation_error};
use stoconv_core::oracles::{
    check_drift_identity, check_taming_derivatives, covariance_vs_quadrature,
    sampler_covariance_check, OracleOutcome, PsiDoublePrime, PsiPrime, TamingCheck,
};
use stoconv_core::representation::representation_gaps;
use stoconv_core::scheme::{chi_constant_from_defect, truncation_defect};
use stoconv_core::taming::{psi_double_prime_apply, psi_prime_apply};
use stoconv_core::{
    derive_seed, path_rng, uniform_grid, BoundInputs, CoupledSimulator, NoiseOperator,
    ProjectionIndex, SpectralOperator, TruncationPolicy,
};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{FitSummary, Report, Row, Verdict};

const TAG_TEMPORAL: u64 = 1;
const TAG_AUDIT: u64 = 2;
const TAG_PAIRS: u64 = 3;
const TAG_SELFTEST: u64 = 4;

/// `(E|Z|^p)^{1/p}` for standard normal `Z` when `p > 2`, else 1. For a
/// centered Gaussian `X` in a Hilbert space,
/// `(E||X||^p)^{1/p} <= this * (E||X||²)^{1/2}`.
pub fn gaussian_moment_constant(p: f64) -> f64 {
    if p <= 2.0 {
        return 1.0;
    }
    let m = 2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt();
    m.powf(1.0 / p)
}

fn bound_inputs(op: &SpectralOperator, b: &NoiseOperator, horizon: f64) -> BoundInputs {
    BoundInputs::for_operators(op, b, horizon)
}

/// `M` and `N` sweeps of the strong error, with rate fits.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let op = cfg.build_operator()?;
    let b = cfg.build_noise(&op)?;
    let mut report = Report::new("convergence", cfg.seed, cfg.replications);
    temporal_sweep(cfg, &op, &b, &mut report)?;
    spatial_sweep(cfg, &op, &b, &mut report)?;
    Ok(report)
}

fn temporal_sweep(
    cfg: &ExperimentConfig,
    op: &SpectralOperator,
    b: &NoiseOperator,
    report: &mut Report,
) -> Result<()> {
    let proj = *cfg
        .projections
        .iter()
        .max_by_key(|p| p.modes)
        .expect("validated");
    let (kept_h, kept_u) = proj.indices(op.dim(), b.u_dim());
    let par = &cfg.parameters;
    let rho = par.rho[0];
    let combos: Vec<(f64, f64)> = cfg
        .moments
        .iter()
        .flat_map(|&p| par.gamma.iter().map(move |&g| (p, g)))
        .collect();
    let tail_hs = spectral_tail_hs(op, b, &kept_h, &kept_u, b.beta() - par.eta)?;

    let mut points = Vec::new();
    for &m in &cfg.grids {
        let grid = uniform_grid(cfg.horizon, m)?;
        let cell = derive_seed(cfg.seed, &[TAG_TEMPORAL, m as u64, proj.modes as u64]);
        let sim = CoupledSimulator::new(op, b, kept_h.clone(), kept_u.clone(), &grid, cfg.policy)?;
        let nodes = grid.len();
        let acc = accumulate_paths(cfg.replications, &vec![nodes; combos.len()], |i| {
            let mut rows = vec![vec![0.0; nodes]; combos.len()];
            sim.visit_path(cell, i, |v| {
                let diff = v.scheme.sub(v.exact);
                for (row, &(p, g)) in rows.iter_mut().zip(&combos) {
                    row[v.index] = op.fractional_norm(g, &diff).powf(p);
                }
            });
            rows
        });

        for (k, &(p, g)) in combos.iter().enumerate() {
            let est = sup_root_mean(&acc[k], p, cell)?;
            if k == 0 {
                points.push((m as f64, est.value));
            }
            let defect = truncation_defect(&sim, p, rho, cfg.replications, cell)?;
            let inputs = BoundInputs {
                p,
                gamma: g,
                eta: par.eta,
                rho,
                c_chi: chi_constant_from_defect(defect, p, rho, cfg.horizon),
                mesh: grid.mesh(),
                ..bound_inputs(op, b, cfg.horizon)
            };
            let row = Row::new("convergence", "lp_error_grid_sup")
                .cell(Some(m), Some(proj.modes))
                .params(&[("p", p), ("gamma", g), ("eta", par.eta), ("rho", rho)])
                .estimate(&est);
            match error_bound(&inputs, tail_hs) {
                Ok(bound) => {
                    let exact_tail = gaussian_moment_constant(p)
                        * convolution_tail_variance(op, b, &kept_h, cfg.horizon, g).sqrt();
                    report.push(row.bound(bound + exact_tail));
                }
                Err(e) => {
                    report.warn(format!("no error bound for p={p}, gamma={g}: {e}"));
                    report.push(row);
                }
            }
        }
    }

    if points.len() < 3 {
        report.warn(format!(
            "temporal sweep has {} grid(s); a rate fit needs at least 3",
            points.len()
        ));
        return Ok(());
    }
    match fit_rate(&points) {
        Ok(fit) => {
            let (p, g) = combos[0];
            report.push(
                Row::new("convergence", "temporal_rate")
                    .cell(None, Some(proj.modes))
                    .params(&[("p", p), ("gamma", g), ("r_squared", fit.r_squared)])
                    .value(fit.slope)
                    .verdict(Verdict::Info),
            );
            report.rows.last_mut().expect("just pushed").std_error = fit.slope_std_error;
            report.fits.push(FitSummary::new("temporal", &fit, None));
        }
        Err(e) => report.warn(format!("temporal rate fit skipped: {e}")),
    }
    Ok(())
}

fn spatial_sweep(
    cfg: &ExperimentConfig,
    op: &SpectralOperator,
    b: &NoiseOperator,
    report: &mut Report,
) -> Result<()> {
    let mut points = Vec::new();
    for proj in &cfg.projections {
        let n = proj.modes;
        let Some(next) = op.tail_infimum(n) else {
            continue;
        };
        let scale = next.abs();
        let err = spatial_truncation_error(op, b, n, cfg.horizon);
        report.push(
            Row::new("convergence", "spatial_l2_error")
                .cell(None, Some(n))
                .params(&[("lambda_next", scale)])
                .value(err),
        );
        points.push((scale, err));
        for &eta in &cfg.parameters.tail_eta {
            let chk = spectral_tail_check(op, b, n, eta)?;
            report.push(
                Row::new("convergence", "spectral_tail_hs")
                    .cell(None, Some(n))
                    .params(&[("eta", eta)])
                    .value(chk.tail)
                    .reference(chk.majorant)
                    .verdict(Verdict::from_bool(chk.holds())),
            );
        }
    }
    if points.len() < 3 {
        report.warn(format!(
            "spatial sweep has {} projection(s) below the operator dimension; a rate fit needs at least 3",
            points.len()
        ));
        return Ok(());
    }
    let implied = match (cfg.operator.growth_exponent(), cfg.noise.decay()) {
        (Some(growth), Some(decay)) => implied_spatial_slope(decay, growth).ok(),
        _ => None,
    };
    match fit_rate(&points) {
        Ok(fit) => {
            let mut row = Row::new("convergence", "spatial_rate")
                .params(&[("r_squared", fit.r_squared)])
                .value(fit.slope);
            row.std_error = fit.slope_std_error;
            if let Some(s) = implied {
                row = row.reference(s);
            }
            report.push(row);
            report.fits.push(FitSummary::new("spatial", &fit, implied));
        }
        Err(e) => report.warn(format!("spatial rate fit skipped: {e}")),
    }
    Ok(())
}

/// Up to `count` distinct node pairs `s < t` among `0..=steps`, sorted.
pub fn random_node_pairs(steps: usize, count: usize, seed: u64) -> Vec<NodePair> {
    let total = steps * (steps + 1) / 2;
    let mut set = BTreeSet::new();
    if count >= total {
        for t in 1..=steps {
            for s in 0..t {
                set.insert((s, t));
            }
        }
    } else {
        let mut rng = path_rng(seed, 0);
        while set.len() < count {
            let a = rng.random_range(0..=steps);
            let c = rng.random_range(0..=steps);
            if a != c {
                set.insert((a.min(c), a.max(c)));
            }
        }
    }
    set.into_iter()
        .map(|(s, t)| NodePair::new(s, t).expect("s < t"))
        .collect()
}

/// Empirical moments, Hölder quotients and exponential moments against their
/// bounds on every `(M, projection)` cell.
pub fn run_bounds_audit(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate_for_audit()?;
    let op = cfg.build_operator()?;
    let b = cfg.build_noise(&op)?;
    let par = &cfg.parameters;
    let mut report = Report::new("bounds-audit", cfg.seed, cfg.replications);
    let combos: Vec<(f64, f64)> = cfg
        .moments
        .iter()
        .flat_map(|&p| par.gamma.iter().map(move |&g| (p, g)))
        .collect();

    for &m in &cfg.grids {
        let grid = uniform_grid(cfg.horizon, m)?;
        let times = grid.nodes();
        let nodes = grid.len();
        let pairs = random_node_pairs(
            m,
            par.holder_pairs,
            derive_seed(cfg.seed, &[TAG_PAIRS, m as u64]),
        );
        for proj in &cfg.projections {
            let (kept_h, kept_u) = proj.indices(op.dim(), b.u_dim());
            let cell = derive_seed(
                cfg.seed,
                &[
                    TAG_AUDIT,
                    m as u64,
                    proj.modes as u64,
                    kept_u.count() as u64,
                ],
            );
            let sim = CoupledSimulator::new(&op, &b, kept_h, kept_u, &grid, cfg.policy)?;
            // the scheme is driven by P_I B P̂_J, so its norms enter the bounds
            let base = bound_inputs(&op, sim.scheme_noise(), cfg.horizon);
            let base = BoundInputs {
                mesh: grid.mesh(),
                ..base
            };

            let mut moments: Vec<NodeAccumulator> =
                combos.iter().map(|_| NodeAccumulator::new(nodes)).collect();
            let mut holder: Vec<NodeAccumulator> = combos
                .iter()
                .map(|_| NodeAccumulator::new(pairs.len()))
                .collect();
            let mut sq_norms = NodeSamples::new(nodes);
            fold_paths(
                cfg.replications,
                |i| {
                    let mut sq = vec![0.0; nodes];
                    let mut norms = vec![vec![0.0; nodes]; combos.len()];
                    let mut path = Vec::with_capacity(nodes);
                    sim.visit_path(cell, i, |v| {
                        sq[v.index] = v.scheme.norm_sq();
                        for (row, &(p, g)) in norms.iter_mut().zip(&combos) {
                            row[v.index] = op.fractional_norm(g, v.scheme).powf(p);
                        }
                        path.push(v.scheme.clone());
                    });
                    let incs: Vec<Vec<f64>> = combos
                        .iter()
                        .map(|&(p, g)| {
                            pairs
                                .iter()
                                .map(|q| op.fractional_norm(g, &path[q.t].sub(&path[q.s])).powf(p))
                                .collect()
                        })
                        .collect();
                    (norms, incs, sq)
                },
                |(norms, incs, sq)| {
                    for (a, r) in moments.iter_mut().zip(&norms) {
                        a.push(r);
                    }
                    for (a, r) in holder.iter_mut().zip(&incs) {
                        a.push(r);
                    }
                    sq_norms.push(&sq);
                },
            );

            let cell_cols = (Some(m), Some(proj.modes));
            for (k, &(p, g)) in combos.iter().enumerate() {
                let est = sup_root_mean(&moments[k], p, cell)?;
                let inputs = BoundInputs {
                    p,
                    gamma: g,
                    ..base
                };
                let row = Row::new("bounds-audit", "moment_grid_sup")
                    .cell(cell_cols.0, cell_cols.1)
                    .params(&[("p", p), ("gamma", g)])
                    .estimate(&est);
                match moment_bound(&inputs) {
                    Ok(bound) => report.push(row.bound(bound)),
                    Err(e) => {
                        report.warn(format!("moment bound skipped for p={p}, gamma={g}: {e}"));
                        report.push(row);
                    }
                }

                for &rho in &par.rho {
                    let inputs = BoundInputs { rho, ..inputs };
                    if let Err(e) = inputs.validate() {
                        report.warn(format!(
                            "Hölder bound skipped for p={p}, gamma={g}, rho={rho}: {e}"
                        ));
                        continue;
                    }
                    let est = holder_from_samples(&holder[k], &times, &pairs, p, rho, cell)?;
                    report.push(
                        Row::new("bounds-audit", "holder_quotient")
                            .cell(cell_cols.0, cell_cols.1)
                            .params(&[
                                ("p", p),
                                ("gamma", g),
                                ("rho", rho),
                                ("pairs", pairs.len() as f64),
                            ])
                            .estimate(&est)
                            .bound(holder_constant(&inputs)?),
                    );
                }
            }

            let eps_max = exp_moment_eps_max(base.hs_zero, cfg.horizon);
            let eps = par.eps.unwrap_or(0.5 * eps_max);
            if eps >= eps_max {
                report.warn(format!(
                    "eps = {eps} is not below eps_max = {eps_max}; the exponential moment bound is infinite"
                ));
            }
            let exp = exp_moment_from_sq_norms(&sq_norms, eps, cell)?;
            if exp.heavy_tail {
                report.warn(format!(
                    "exponential moment at M={m}, N={} is dominated by its top 0.1% of samples",
                    proj.modes
                ));
            }
            report.push(
                Row::new("bounds-audit", "exp_moment_grid_sup")
                    .cell(cell_cols.0, cell_cols.1)
                    .params(&[
                        ("eps", eps),
                        ("eps_max", eps_max),
                        ("heavy_tail", if exp.heavy_tail { 1.0 } else { 0.0 }),
                    ])
                    .estimate(&exp.estimate)
                    .bound(exp_moment_bound(eps, base.hs_zero, cfg.horizon)),
            );

            for &p in &cfg.moments {
                for &rho in &par.rho {
                    let d = truncation_defect(&sim, p, rho, cfg.replications, cell)?;
                    report.push(
                        Row::new("bounds-audit", "truncation_defect")
                            .cell(cell_cols.0, cell_cols.1)
                            .params(&[("p", p), ("rho", rho)])
                            .value(d),
                    );
                }
            }
        }
    }
    Ok(report)
}

fn oracle_row(o: &OracleOutcome) -> Row {
    Row::new("selftest", &o.name)
        .params(&[("cases", o.cases as f64)])
        .value(o.measured)
        .tolerance(o.tolerance)
}

/// Fixed small models for the increment-law oracles, plus the configured model
/// when it is small.
fn covariance_cases(
    cfg: &ExperimentConfig,
    op: &SpectralOperator,
    b: &NoiseOperator,
) -> Result<Vec<(&'static str, SpectralOperator, NoiseOperator, f64)>> {
    let mut cases = vec![
        (
            "scalar",
            SpectralOperator::new(vec![-1.0])?,
            NoiseOperator::new(1, 1, vec![1.0], 0.0)?,
            1.0,
        ),
        (
            "rank-deficient",
            SpectralOperator::new(vec![-1.0, -4.0, -9.0])?,
            NoiseOperator::new(3, 2, vec![1.0, 0.5, 0.0, 1.0, 0.3, -0.2], 0.0)?,
            0.25,
        ),
    ];
    if op.dim() + b.u_dim() <= 16 {
        cases.push((
            "configured",
            op.clone(),
            b.clone(),
            cfg.horizon / cfg.grids[0] as f64,
        ));
    }
    Ok(cases)
}

/// Oracle suite with the shipped taming derivatives.
pub fn run_selftest(cfg: &ExperimentConfig) -> Result<Report> {
    run_selftest_with(cfg, &psi_prime_apply, &psi_double_prime_apply)
}

/// Oracle suite with caller-supplied `ψ'` and `ψ''` in the taming checks.
pub fn run_selftest_with(
    cfg: &ExperimentConfig,
    psi_prime: PsiPrime,
    psi_double_prime: PsiDoublePrime,
) -> Result<Report> {
    cfg.validate()?;
    let st = &cfg.selftest;
    let seed = |k: u64| derive_seed(cfg.seed, &[TAG_SELFTEST, k]);
    let mut report = Report::new("selftest", cfg.seed, cfg.replications);

    let taming = TamingCheck {
        cases: st.taming_cases,
        seed: seed(1),
        ..TamingCheck::default()
    };
    for o in check_taming_derivatives(&taming, psi_prime, psi_double_prime) {
        report.push(oracle_row(&o));
    }
    report.push(oracle_row(&check_drift_identity(
        st.taming_cases,
        5,
        10.0,
        seed(2),
        1e-12,
    )));

    let op = cfg.build_operator()?;
    let b = cfg.build_noise(&op)?;
    for (k, (name, cop, cb, h)) in covariance_cases(cfg, &op, &b)?.into_iter().enumerate() {
        let s = sampler_covariance_check(&cop, &cb, h, st.covariance_paths, seed(10 + k as u64))?;
        report.push(
            Row::new("selftest", &format!("sampler_covariance_max_z/{name}"))
                .params(&[("h", h), ("paths", s.paths as f64)])
                .value(s.max_z)
                .tolerance(st.z_tolerance),
        );
        let q = covariance_vs_quadrature(
            &cop,
            &cb,
            h,
            st.quadrature_substeps,
            st.quadrature_paths,
            seed(20 + k as u64),
        )?;
        report.push(
            Row::new("selftest", &format!("quadrature_covariance_max_z/{name}"))
                .params(&[
                    ("h", h),
                    ("paths", q.paths as f64),
                    ("substeps", st.quadrature_substeps as f64),
                ])
                .value(q.max_z)
                .tolerance(st.z_tolerance),
        );
    }

    let m = cfg.grids[0];
    let proj = cfg.projections[0];
    let (kept_h, kept_u) = proj.indices(op.dim(), b.u_dim());
    let sim = CoupledSimulator::new(
        &op,
        &b,
        kept_h,
        kept_u,
        &uniform_grid(cfg.horizon, m)?,
        cfg.policy,
    )?;
    let gaps = representation_gaps(
        &sim,
        &st.representation_substeps,
        cfg.replications,
        seed(30),
    )?;
    let mut increases = 0;
    for (k, g) in gaps.iter().enumerate() {
        let row = Row::new("selftest", "representation_gap")
            .cell(Some(m), Some(proj.modes))
            .params(&[("substeps", g.substeps as f64)])
            .estimate(&g.gap);
        if k + 1 == gaps.len() {
            report.push(row.tolerance(st.representation_tolerance));
        } else {
            report.push(row);
        }
        if k > 0 && g.gap.value >= gaps[k - 1].gap.value {
            increases += 1;
        }
    }
    report.push(
        Row::new("selftest", "representation_gap_increases")
            .cell(Some(m), Some(proj.modes))
            .value(increases as f64)
            .tolerance(0.0),
    );

    evaluator_examples(&mut report)?;
    defect_examples(&mut report, cfg.horizon)?;
    Ok(report)
}

/// Closed-form evaluators on hand-computed inputs.
fn evaluator_examples(report: &mut Report) -> Result<()> {
    let unit = BoundInputs {
        p: 2.0,
        beta: 0.0,
        gamma: 0.0,
        eta: 0.0,
        rho: 0.0,
        horizon: 1.0,
        c_chi: 1.0,
        hs_beta: 1.0,
        hs_zero: 1.0,
        sup_lambda: -1.0,
        mesh: 1.0,
    };
    let terms = error_bound_terms(&unit, 0.1)?;
    let checks = [
        ("moment_bound_example", moment_bound(&unit)?, 102.0),
        ("holder_constant_example", holder_constant(&unit)?, 216.0),
        (
            "error_bound_spatial_example",
            terms.spatial,
            0.1 * 2f64.sqrt(),
        ),
        ("error_bound_temporal_example", terms.temporal, 128.0),
        (
            "exp_moment_bound_example",
            exp_moment_bound(1.0 / 128.0, 1.0, 1.0),
            8.0 / 3.0,
        ),
        (
            "exp_moment_eps_max_example",
            exp_moment_eps_max(1.0, 1.0),
            1.0 / 64.0,
        ),
    ];
    for (name, got, want) in checks {
        report.push(
            Row::new("selftest", name)
                .params(&[("expected", want)])
                .value((got - want).abs())
                .tolerance(1e-12 * want.abs().max(1.0)),
        );
    }
    Ok(())
}

/// Calibrated Bernoulli truncation has defect exactly `T^{pρ}` for every `M`;
/// the identity policy has none.
fn defect_examples(report: &mut Report, horizon: f64) -> Result<()> {
    let op = SpectralOperator::new(vec![-1.0])?;
    let b = NoiseOperator::new(1, 1, vec![1.0], 0.0)?;
    let all = ProjectionIndex::all(1);
    for (p, rho) in [(2.0, 0.25), (3.0, 0.1)] {
        let mut worst = 0.0f64;
        let mut identity = 0.0f64;
        for k in 1..=10 {
            let m = 1usize << k;
            let grid = uniform_grid(horizon, m)?;
            let policy = TruncationPolicy::calibrated_bernoulli(1.0, horizon, m, p, rho);
            let sim = CoupledSimulator::new(&op, &b, all.clone(), all.clone(), &grid, policy)?;
            let d = truncation_defect(&sim, p, rho, 1, 0)?;
            worst = worst.max((d - horizon.powf(p * rho)).abs());
            let id = CoupledSimulator::new(
                &op,
                &b,
                all.clone(),
                all.clone(),
                &grid,
                TruncationPolicy::Identity,
            )?;
            identity = identity.max(truncation_defect(&id, p, rho, 1, 0)?);
        }
        report.push(
            Row::new("selftest", "bernoulli_defect_deviation")
                .params(&[("p", p), ("rho", rho)])
                .value(worst)
                .tolerance(1e-12),
        );
        report.push(
            Row::new("selftest", "identity_defect")
                .params(&[("p", p), ("rho", rho)])
                .value(identity)
                .tolerance(0.0),
        );
    }
    Ok(())
}
