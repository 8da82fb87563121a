//! Tamed-truncated exponential Euler approximation of the stochastic
//! convolution and its coupling to the exact process.
//!
//! On a grid `0 = t_0 < ... < t_M = T` the scheme reads
//!
//! ```text
//! O_{t_{m+1}} = e^{h_m A} ( O_{t_m} + χ_{t_m} X_m / (1 + ||X_m||_H^2) ),   O_0 = 0,
//! ```
//!
//! where `X_m = ∫_{t_m}^{t_{m+1}} P_I B P̂_J dW` is the projected, smoothed
//! noise increment. The exact convolution is advanced with the exact
//! increment `Y_m` sampled jointly with the same `dW`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{range_error, Error, Result};
use crate::grid::TimeGrid;
use crate::noise::{IncrementCovariance, NoiseOperator};
use crate::rng::path_rng;
use crate::spectral::{ProjectionIndex, SpectralOperator, StateVector};
use crate::taming::psi;

/// Adapted `[0, 1]`-valued multiplier that can switch the noise increment off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruncationPolicy {
    /// `χ ≡ 1`.
    #[default]
    Identity,
    /// `χ ≡ 0` on a whole path with probability `q` (drawn at time 0), else 1.
    Bernoulli { q: f64 },
    /// `χ_{t_m} = 1{ ||O_{t_m}||_H <= c M^exponent }`.
    NormThreshold { c: f64, exponent: f64 },
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TruncationPolicy::Identity => Ok(()),
            TruncationPolicy::Bernoulli { q } => {
                if (0.0..=1.0).contains(&q) {
                    Ok(())
                } else {
                    Err(range_error("q", q, "must lie in [0, 1]"))
                }
            }
            TruncationPolicy::NormThreshold { c, exponent } => {
                if !(c > 0.0) {
                    return Err(range_error("c", c, "threshold must be positive"));
                }
                if !exponent.is_finite() {
                    return Err(range_error("exponent", exponent, "must be finite"));
                }
                Ok(())
            }
        }
    }

    /// Bernoulli policy calibrated so that `E|χ - 1|^p M^{pρ} = C T^{pρ}`:
    /// `q = min(1, C (T/M)^{pρ})`.
    pub fn calibrated_bernoulli(
        constant: f64,
        horizon: f64,
        steps: usize,
        p: f64,
        rho: f64,
    ) -> Self {
        let q = (constant * (horizon / steps as f64).powf(p * rho)).min(1.0);
        TruncationPolicy::Bernoulli { q }
    }

    /// Fix the path-level randomness. Bernoulli policies consume exactly one
    /// uniform draw; the others consume none.
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> RealizedTruncation {
        let switched_off = match *self {
            TruncationPolicy::Bernoulli { q } => rng.random::<f64>() < q,
            _ => false,
        };
        RealizedTruncation {
            policy: *self,
            switched_off,
        }
    }
}

/// A truncation policy with its `F_0`-measurable randomness drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedTruncation {
    policy: TruncationPolicy,
    switched_off: bool,
}

impl RealizedTruncation {
    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    /// `χ_{t_m}` given the scheme state at `t_m` on a grid with `steps` steps.
    pub fn chi(&self, state: &SchemeState, steps: usize) -> f64 {
        match self.policy {
            TruncationPolicy::Identity => 1.0,
            TruncationPolicy::Bernoulli { .. } => {
                if self.switched_off {
                    0.0
                } else {
                    1.0
                }
            }
            TruncationPolicy::NormThreshold { c, exponent } => {
                let threshold = c * (steps as f64).powf(exponent);
                if state.value.norm() <= threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `χ` at the current node.
pub fn chi_eval(policy: &RealizedTruncation, state: &SchemeState, steps: usize) -> f64 {
    policy.chi(state, steps)
}

/// Scheme value at a grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub node: usize,
    pub t: f64,
    pub value: StateVector,
}

impl SchemeState {
    pub fn initial(dim: usize) -> Self {
        SchemeState {
            node: 0,
            t: 0.0,
            value: StateVector::zeros(dim),
        }
    }
}

/// `e^{hA} (O + χ ψ(X))`.
pub fn scheme_step(
    state: &SchemeState,
    h: f64,
    increment: &StateVector,
    chi: f64,
    op: &SpectralOperator,
) -> Result<SchemeState> {
    if !(h > 0.0) {
        return Err(range_error("h", h, "step must be positive"));
    }
    Ok(SchemeState {
        node: state.node + 1,
        t: state.t + h,
        value: tamed_update(&state.value, h, increment, chi, op)?,
    })
}

/// Scheme value at `t_m + dt` for `dt` inside the step, given the smoothed
/// increment accumulated over `[t_m, t_m + dt]`. At `dt = h_m` this is the next
/// node value.
pub fn evaluate_between(
    state: &SchemeState,
    dt: f64,
    partial_increment: &StateVector,
    chi: f64,
    op: &SpectralOperator,
) -> Result<StateVector> {
    tamed_update(&state.value, dt, partial_increment, chi, op)
}

fn tamed_update(
    value: &StateVector,
    dt: f64,
    increment: &StateVector,
    chi: f64,
    op: &SpectralOperator,
) -> Result<StateVector> {
    if !(0.0..=1.0).contains(&chi) {
        return Err(range_error("chi", chi, "must lie in [0, 1]"));
    }
    let mut inner = value.clone();
    if chi != 0.0 {
        inner.axpy(chi, &psi(increment));
    }
    op.semigroup_apply(dt, &inner)
}

/// Scheme path and exact convolution driven by one noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrajectory {
    pub times: Vec<f64>,
    /// `O^{θ,I,J}_{t_m}` for every node.
    pub scheme: Vec<StateVector>,
    /// `O_{t_m}` for every node.
    pub exact: Vec<StateVector>,
    /// `χ_{t_m}` used on step `m`.
    pub chi: Vec<f64>,
    /// U-coefficients of `W_{t_{m+1}} - W_{t_m}`.
    pub increments: Vec<Vec<f64>>,
}

impl CoupledTrajectory {
    pub fn nodes(&self) -> usize {
        self.times.len()
    }
}

/// Values at one node of a path being simulated.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub index: usize,
    pub t: f64,
    pub scheme: &'a StateVector,
    pub exact: &'a StateVector,
    /// The step that ended at this node; `None` at `t = 0`.
    pub step: Option<StepRecord<'a>>,
}

/// Truncation value and Wiener increment of one step.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<'a> {
    pub chi: f64,
    pub dw: &'a [f64],
}

/// Precomputed data for simulating coupled trajectories on one grid.
#[derive(Debug, Clone)]
pub struct CoupledSimulator {
    op: SpectralOperator,
    noise: NoiseOperator,
    scheme_noise: NoiseOperator,
    kept_h: ProjectionIndex,
    kept_u: ProjectionIndex,
    grid: TimeGrid,
    policy: TruncationPolicy,
    /// Distinct step covariances and semigroup factors.
    steps: Vec<StepData>,
    step_of: Vec<usize>,
}

#[derive(Debug, Clone)]
struct StepData {
    cov: IncrementCovariance,
    decay: Vec<f64>,
}

impl CoupledSimulator {
    pub fn new(
        op: &SpectralOperator,
        noise: &NoiseOperator,
        kept_h: ProjectionIndex,
        kept_u: ProjectionIndex,
        grid: &TimeGrid,
        policy: TruncationPolicy,
    ) -> Result<Self> {
        if noise.h_dim() != op.dim() {
            return Err(Error::Dimension {
                expected: op.dim(),
                got: noise.h_dim(),
            });
        }
        if kept_h.dim() != op.dim() {
            return Err(Error::Dimension {
                expected: op.dim(),
                got: kept_h.dim(),
            });
        }
        if kept_u.dim() != noise.u_dim() {
            return Err(Error::Dimension {
                expected: noise.u_dim(),
                got: kept_u.dim(),
            });
        }
        policy.validate()?;

        let mut steps: Vec<StepData> = Vec::new();
        let mut step_of = Vec::with_capacity(grid.steps());
        for m in 0..grid.steps() {
            let h = grid.gap(m);
            let idx = match steps.iter().position(|s| s.cov.step() == h) {
                Some(i) => i,
                None => {
                    steps.push(StepData {
                        cov: IncrementCovariance::new(op, noise, h)?,
                        decay: op.semigroup_factors(h)?,
                    });
                    steps.len() - 1
                }
            };
            step_of.push(idx);
        }

        Ok(CoupledSimulator {
            op: op.clone(),
            noise: noise.clone(),
            scheme_noise: noise.project(&kept_h, &kept_u),
            kept_h,
            kept_u,
            grid: grid.clone(),
            policy,
            steps,
            step_of,
        })
    }

    pub fn operator(&self) -> &SpectralOperator {
        &self.op
    }

    pub fn noise(&self) -> &NoiseOperator {
        &self.noise
    }

    /// `P_I B P̂_J`.
    pub fn scheme_noise(&self) -> &NoiseOperator {
        &self.scheme_noise
    }

    pub fn kept_h(&self) -> &ProjectionIndex {
        &self.kept_h
    }

    pub fn kept_u(&self) -> &ProjectionIndex {
        &self.kept_u
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    /// Simulate one coupled path, calling `visit` at every node in time order.
    /// Stream layout: the policy draws first, then each step draws one joint
    /// Gaussian vector.
    pub fn simulate_visit<R, F>(&self, rng: &mut R, mut visit: F)
    where
        R: Rng + ?Sized,
        F: FnMut(NodeView<'_>),
    {
        let dim = self.op.dim();
        let steps = self.grid.steps();
        let realized = self.policy.realize(rng);

        let mut state = SchemeState::initial(dim);
        let mut exact = StateVector::zeros(dim);
        visit(NodeView {
            index: 0,
            t: 0.0,
            scheme: &state.value,
            exact: &exact,
            step: None,
        });

        let mut y = vec![0.0; dim];
        let mut dw = vec![0.0; self.noise.u_dim()];
        let mut x = StateVector::zeros(dim);
        let mut scratch = Vec::new();
        for m in 0..steps {
            let data = &self.steps[self.step_of[m]];
            data.cov.sample_into(rng, &mut y, &mut dw, &mut scratch);
            self.scheme_noise.apply_into(&dw, &mut x);
            let chi = realized.chi(&state, steps);

            let factor = if chi != 0.0 {
                chi / (1.0 + x.norm_sq())
            } else {
                0.0
            };
            for (((o, &xi), &d), (e, &yi)) in state
                .value
                .iter_mut()
                .zip(x.iter())
                .zip(&data.decay)
                .zip(exact.iter_mut().zip(&y))
            {
                *o = d * (*o + factor * xi);
                *e = d * *e + yi;
            }
            state.node = m + 1;
            state.t = self.grid.node(m + 1);
            visit(NodeView {
                index: m + 1,
                t: state.t,
                scheme: &state.value,
                exact: &exact,
                step: Some(StepRecord { chi, dw: &dw }),
            });
        }
    }

    /// Simulate one coupled path and keep all of it.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> CoupledTrajectory {
        let n = self.grid.len();
        let mut traj = CoupledTrajectory {
            times: Vec::with_capacity(n),
            scheme: Vec::with_capacity(n),
            exact: Vec::with_capacity(n),
            chi: Vec::with_capacity(n - 1),
            increments: Vec::with_capacity(n - 1),
        };
        self.simulate_visit(rng, |v| {
            traj.times.push(v.t);
            traj.scheme.push(v.scheme.clone());
            traj.exact.push(v.exact.clone());
            if let Some(step) = v.step {
                traj.chi.push(step.chi);
                traj.increments.push(step.dw.to_vec());
            }
        });
        traj
    }

    /// Simulate path `index` of a batch seeded with `seed`.
    pub fn simulate_path(&self, seed: u64, index: u64) -> CoupledTrajectory {
        self.simulate(&mut path_rng(seed, index))
    }

    /// [`Self::simulate_visit`] on path `index` of a batch seeded with `seed`.
    pub fn visit_path<F: FnMut(NodeView<'_>)>(&self, seed: u64, index: u64, visit: F) {
        self.simulate_visit(&mut path_rng(seed, index), visit)
    }
}

/// One coupled trajectory on `grid` with spatial projections `I`, `J`.
pub fn simulate_coupled<R: Rng + ?Sized>(
    grid: &TimeGrid,
    op: &SpectralOperator,
    noise: &NoiseOperator,
    kept_h: &ProjectionIndex,
    kept_u: &ProjectionIndex,
    policy: TruncationPolicy,
    rng: &mut R,
) -> Result<CoupledTrajectory> {
    let sim = CoupledSimulator::new(op, noise, kept_h.clone(), kept_u.clone(), grid, policy)?;
    Ok(sim.simulate(rng))
}

/// `sup_m E|χ_{t_m} - 1|^p · M^{pρ}` over the nodes where `χ` is used.
///
/// Identity and Bernoulli policies are evaluated exactly; norm-threshold
/// policies by Monte Carlo over `trials` coupled paths.
pub fn truncation_defect(
    sim: &CoupledSimulator,
    p: f64,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(range_error("p", p, "moment order must be at least 1"));
    }
    if !(rho >= 0.0) {
        return Err(range_error("rho", rho, "rate must be nonnegative"));
    }
    let steps = sim.grid().steps();
    let scale = (steps as f64).powf(p * rho);
    match sim.policy() {
        TruncationPolicy::Identity => Ok(0.0),
        // |χ - 1|^p is the indicator of the switched-off event
        TruncationPolicy::Bernoulli { q } => Ok(q * scale),
        TruncationPolicy::NormThreshold { .. } => {
            if trials == 0 {
                return Err(Error::EmptyBatch);
            }
            let mut sums = vec![0.0; steps];
            for i in 0..trials {
                sim.visit_path(seed, i as u64, |v| {
                    if let Some(step) = v.step {
                        sums[v.index - 1] += (step.chi - 1.0).abs().powf(p);
                    }
                });
            }
            Ok(sums.iter().fold(0.0f64, |a, &s| a.max(s / trials as f64)) * scale)
        }
    }
}

/// Smallest `C >= 1` with `||χ - 1||_{L^p} <= C |θ|^ρ` implied by a measured
/// defect `sup E|χ - 1|^p M^{pρ}` on a uniform grid of horizon `T`.
pub fn chi_constant_from_defect(defect: f64, p: f64, rho: f64, horizon: f64) -> f64 {
    (defect.powf(1.0 / p) * horizon.powf(-rho)).max(1.0)
}
