//! Noise operators and exact coupled sampling of convolution increments.
//!
//! For a step of length `h` the pair
//! `(Y, dW) = (∫_0^h e^{(h-s)A} B dW_s, W_h - W_0)` is jointly Gaussian with
//!
//! ```text
//! Cov(Y_n, Y_m)  = (B B^T)_{nm} (1 - e^{(λ_n+λ_m) h}) / (-(λ_n+λ_m))
//! Cov(Y_n, dW_j) = B_{nj} (e^{λ_n h} - 1) / λ_n
//! Cov(dW, dW)    = h I
//! ```
//!
//! so the exact convolution can be advanced by `O_{t+h} = e^{hA} O_t + Y`
//! while any scheme driven by the same `dW` sees the identical noise.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{range_error, Error, Result};
use crate::linalg::{psd_cholesky, LowerFactor};
use crate::spectral::{ProjectionIndex, SpectralOperator, StateVector};

/// `B : U -> H` stored as the coefficient matrix `B_{nj} = <h_n, B u_j>`,
/// row-major with `h_dim` rows and `u_dim` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseOperator {
    h_dim: usize,
    u_dim: usize,
    coeffs: Vec<f64>,
    beta: f64,
    nonzeros: Vec<(usize, usize, f64)>,
}

impl NoiseOperator {
    pub fn new(h_dim: usize, u_dim: usize, coeffs: Vec<f64>, beta: f64) -> Result<Self> {
        if coeffs.len() != h_dim * u_dim {
            return Err(Error::Dimension {
                expected: h_dim * u_dim,
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidNoise("non-finite coefficient".into()));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(range_error("beta", beta, "must be nonnegative"));
        }
        let nonzeros = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(k, &c)| (k / u_dim, k % u_dim, c))
            .collect();
        Ok(NoiseOperator {
            h_dim,
            u_dim,
            coeffs,
            beta,
            nonzeros,
        })
    }

    /// Diagonal operator `B u_n = b_n h_n` with `b_n` given for `n = 1..=len`;
    /// `u_dim >= len` adds U-directions that `B` annihilates.
    pub fn diagonal(b: &[f64], u_dim: usize, beta: f64) -> Result<Self> {
        let h_dim = b.len();
        let mut coeffs = vec![0.0; h_dim * u_dim];
        for (n, &bn) in b.iter().enumerate() {
            if n < u_dim {
                coeffs[n * u_dim + n] = bn;
            }
        }
        Self::new(h_dim, u_dim, coeffs, beta)
    }

    /// `b_n = scale * n^{-decay}` on `h_dim` modes.
    pub fn power_decay(
        h_dim: usize,
        u_dim: usize,
        scale: f64,
        decay: f64,
        beta: f64,
    ) -> Result<Self> {
        let b: Vec<f64> = (1..=h_dim)
            .map(|n| scale * (n as f64).powf(-decay))
            .collect();
        Self::diagonal(&b, u_dim, beta)
    }

    pub fn zero(h_dim: usize, u_dim: usize) -> Self {
        Self::new(h_dim, u_dim, vec![0.0; h_dim * u_dim], 0.0).expect("zero operator is valid")
    }

    pub fn h_dim(&self) -> usize {
        self.h_dim
    }

    pub fn u_dim(&self) -> usize {
        self.u_dim
    }

    /// Declared smoothness class `β` of `B ∈ HS(U, H_β)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn coeff(&self, n: usize, j: usize) -> f64 {
        self.coeffs[n * self.u_dim + j]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.nonzeros.is_empty()
    }

    /// `B u` for `u` given in U-coefficients.
    pub fn apply(&self, u: &[f64]) -> StateVector {
        let mut out = StateVector::zeros(self.h_dim);
        self.apply_into(u, &mut out);
        out
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.u_dim);
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(n, j, c) in &self.nonzeros {
            out[n] += c * u[j];
        }
    }

    /// Adjoint `𝔹 h = B^T h`, i.e. `<B u, h>_H = <u, 𝔹 h>_U`.
    pub fn adjoint_apply(&self, h: &[f64]) -> Vec<f64> {
        debug_assert_eq!(h.len(), self.h_dim);
        let mut out = vec![0.0; self.u_dim];
        for &(n, j, c) in &self.nonzeros {
            out[j] += c * h[n];
        }
        out
    }

    /// `B u_j`.
    pub fn column(&self, j: usize) -> StateVector {
        StateVector((0..self.h_dim).map(|n| self.coeff(n, j)).collect())
    }

    /// `||B||_{HS(U,H)}^2` without spectral weights.
    pub fn hs_norm_sq_plain(&self) -> f64 {
        self.nonzeros.iter().map(|&(_, _, c)| c * c).sum()
    }

    /// `||B||_{HS(U, H_r)} = (sum_{n,j} |λ_n|^{2r} B_{nj}^2)^{1/2}`.
    pub fn hs_norm(&self, op: &SpectralOperator, r: f64) -> f64 {
        assert_eq!(op.dim(), self.h_dim, "operator and noise dimensions differ");
        let w = op.power_weights(2.0 * r);
        self.nonzeros
            .iter()
            .map(|&(n, _, c)| w[n] * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `P_I B P̂_J`.
    pub fn project(&self, kept_h: &ProjectionIndex, kept_u: &ProjectionIndex) -> NoiseOperator {
        assert_eq!(kept_h.dim(), self.h_dim);
        assert_eq!(kept_u.dim(), self.u_dim);
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let (n, j) = (k / self.u_dim, k % self.u_dim);
                if kept_h.contains(n) && kept_u.contains(j) {
                    c
                } else {
                    0.0
                }
            })
            .collect();
        NoiseOperator::new(self.h_dim, self.u_dim, coeffs, self.beta)
            .expect("projection keeps shape")
    }

    /// `B - P_I B P̂_J`.
    pub fn projection_remainder(
        &self,
        kept_h: &ProjectionIndex,
        kept_u: &ProjectionIndex,
    ) -> NoiseOperator {
        let p = self.project(kept_h, kept_u);
        let coeffs = self
            .coeffs
            .iter()
            .zip(p.coeffs())
            .map(|(a, b)| a - b)
            .collect();
        NoiseOperator::new(self.h_dim, self.u_dim, coeffs, self.beta).expect("same shape")
    }

    /// `B B^T`, row-major `h_dim x h_dim`.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.h_dim;
        let mut g = vec![0.0; n * n];
        // group nonzeros by U column
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.u_dim];
        for &(r, j, c) in &self.nonzeros {
            by_col[j].push((r, c));
        }
        for col in &by_col {
            for &(a, ca) in col {
                for &(b, cb) in col {
                    g[a * n + b] += ca * cb;
                }
            }
        }
        g
    }
}

/// `∫_0^h e^{x s} ds = (e^{x h} - 1) / x` for `x <= 0`, accurate as `x h -> 0`.
pub fn damped_integral(x: f64, h: f64) -> f64 {
    let xh = x * h;
    if xh.abs() < 1e-8 {
        h * (1.0 + 0.5 * xh)
    } else {
        xh.exp_m1() / x
    }
}

/// Per-mode variance of `O_t = ∫_0^t e^{(t-s)A} B dW_s`.
pub fn convolution_variance(op: &SpectralOperator, b: &NoiseOperator, t: f64) -> Vec<f64> {
    let g = b.gram();
    let n = op.dim();
    op.eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &l)| g[i * n + i] * damped_integral(2.0 * l, t))
        .collect()
}

/// `(E ||(I - P_N) O_t||_H^2)^{1/2}`: the L² spatial truncation error of the
/// exact convolution when the first `kept` modes are retained.
pub fn spatial_truncation_error(
    op: &SpectralOperator,
    b: &NoiseOperator,
    kept: usize,
    t: f64,
) -> f64 {
    convolution_variance(op, b, t)
        .iter()
        .skip(kept)
        .sum::<f64>()
        .sqrt()
}

/// `E ||(-A)^γ (I - P_I) O_t||_H²`: the exact convolution's variance outside
/// the kept modes, measured in `H_γ`.
pub fn convolution_tail_variance(
    op: &SpectralOperator,
    b: &NoiseOperator,
    kept: &ProjectionIndex,
    t: f64,
    gamma: f64,
) -> f64 {
    let w = op.power_weights(2.0 * gamma);
    convolution_variance(op, b, t)
        .iter()
        .enumerate()
        .filter(|(n, _)| !kept.contains(*n))
        .map(|(n, v)| w[n] * v)
        .sum()
}

/// Law of `(Y, dW)` over one step, with a factor ready for sampling.
///
/// The sampled vector is ordered `(dW_1, ..., dW_K, Y_1, ..., Y_N)`.
#[derive(Debug, Clone)]
pub struct IncrementCovariance {
    step: f64,
    h_dim: usize,
    u_dim: usize,
    cov_yy: Vec<f64>,
    cov_yw: Vec<f64>,
    factor: LowerFactor,
}

impl IncrementCovariance {
    pub fn new(op: &SpectralOperator, b: &NoiseOperator, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(range_error("h", step, "step must be positive"));
        }
        if op.dim() != b.h_dim() {
            return Err(Error::Dimension {
                expected: op.dim(),
                got: b.h_dim(),
            });
        }
        let n = b.h_dim();
        let k = b.u_dim();
        let lam = op.eigenvalues();
        let gram = b.gram();
        let mut cov_yy = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let g = gram[i * n + j];
                if g != 0.0 {
                    cov_yy[i * n + j] = g * damped_integral(lam[i] + lam[j], step);
                }
            }
        }
        let mut cov_yw = vec![0.0; n * k];
        for i in 0..n {
            let w = damped_integral(lam[i], step);
            for j in 0..k {
                cov_yw[i * k + j] = b.coeff(i, j) * w;
            }
        }

        let d = n + k;
        let mut full = vec![0.0; d * d];
        for j in 0..k {
            full[j * d + j] = step;
        }
        for i in 0..n {
            for j in 0..k {
                let c = cov_yw[i * k + j];
                full[(k + i) * d + j] = c;
                full[j * d + (k + i)] = c;
            }
            for m in 0..n {
                full[(k + i) * d + (k + m)] = cov_yy[i * n + m];
            }
        }
        let factor = psd_cholesky(&full, d)?;
        Ok(IncrementCovariance {
            step,
            h_dim: n,
            u_dim: k,
            cov_yy,
            cov_yw,
            factor,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn h_dim(&self) -> usize {
        self.h_dim
    }

    pub fn u_dim(&self) -> usize {
        self.u_dim
    }

    pub fn cov_yy(&self, n: usize, m: usize) -> f64 {
        self.cov_yy[n * self.h_dim + m]
    }

    pub fn cov_yw(&self, n: usize, j: usize) -> f64 {
        self.cov_yw[n * self.u_dim + j]
    }

    /// `Cov(dW_i, dW_j) = h δ_ij`.
    pub fn cov_ww(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.step
        } else {
            0.0
        }
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    /// Draw `(Y, dW)` into caller buffers; `scratch` is resized as needed.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        y: &mut [f64],
        dw: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let d = self.h_dim + self.u_dim;
        scratch.resize(2 * d, 0.0);
        let (xi, z) = scratch.split_at_mut(d);
        for x in xi.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        self.factor.mul_into(xi, z);
        dw.copy_from_slice(&z[..self.u_dim]);
        y.copy_from_slice(&z[self.u_dim..]);
    }
}

/// One joint draw of `(Y, dW)`.
pub fn sample_coupled_increment<R: Rng + ?Sized>(
    cov: &IncrementCovariance,
    rng: &mut R,
) -> (StateVector, Vec<f64>) {
    let mut y = StateVector::zeros(cov.h_dim());
    let mut dw = vec![0.0; cov.u_dim()];
    let mut scratch = Vec::new();
    cov.sample_into(rng, &mut y, &mut dw, &mut scratch);
    (y, dw)
}

/// Left-point quadrature `Σ_k e^{(h - s_k)A} B δW_k` for given Wiener
/// increments over `increments.len()` equal substeps of `[0, h]`.
pub fn convolution_quadrature(
    op: &SpectralOperator,
    b: &NoiseOperator,
    h: f64,
    increments: &[Vec<f64>],
) -> StateVector {
    let s = increments.len();
    let delta = h / s as f64;
    let mut y = StateVector::zeros(op.dim());
    let mut bw = vec![0.0; op.dim()];
    for (k, dw) in increments.iter().enumerate() {
        let remaining = h - k as f64 * delta;
        b.apply_into(dw, &mut bw);
        for ((yn, &l), &v) in y.iter_mut().zip(op.eigenvalues()).zip(&bw) {
            *yn += (l * remaining).exp() * v;
        }
    }
    y
}

/// Draw `substeps` Wiener increments of variance `h / substeps` per U-mode.
pub fn fine_increments<R: Rng + ?Sized>(
    rng: &mut R,
    u_dim: usize,
    h: f64,
    substeps: usize,
) -> Vec<Vec<f64>> {
    let sd = (h / substeps as f64).sqrt();
    (0..substeps)
        .map(|_| {
            (0..u_dim)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Sum consecutive groups of `factor` increments.
pub fn coarsen_increments(increments: &[Vec<f64>], factor: usize) -> Vec<Vec<f64>> {
    assert!(factor >= 1 && increments.len().is_multiple_of(factor));
    increments
        .chunks(factor)
        .map(|chunk| {
            let mut acc = vec![0.0; chunk[0].len()];
            for inc in chunk {
                for (a, v) in acc.iter_mut().zip(inc) {
                    *a += v;
                }
            }
            acc
        })
        .collect()
}

/// Brute-force validation oracle for the exact sampler: left-point Itô
/// quadrature over `substeps` subintervals, returning `(Y_approx, dW)`.
pub fn brute_force_convolution_oracle<R: Rng + ?Sized>(
    op: &SpectralOperator,
    b: &NoiseOperator,
    h: f64,
    substeps: usize,
    rng: &mut R,
) -> Result<(StateVector, Vec<f64>)> {
    if substeps == 0 {
        return Err(range_error("substeps", 0.0, "need at least one substep"));
    }
    let incs = fine_increments(rng, b.u_dim(), h, substeps);
    let y = convolution_quadrature(op, b, h, &incs);
    let dw = coarsen_increments(&incs, substeps).pop().unwrap();
    Ok((y, dw))
}

/// Noise description as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// `B u_n = scale * n^{-decay} h_n`.
    Diagonal {
        #[serde(default = "default_scale")]
        scale: f64,
        decay: f64,
        /// Number of U-modes; defaults to the number of H-modes.
        #[serde(default)]
        u_modes: Option<usize>,
        #[serde(default)]
        beta: f64,
    },
    /// Dense coefficient matrix from a headerless CSV file, one row per H-mode.
    Dense {
        file: String,
        #[serde(default)]
        beta: f64,
    },
}

fn default_scale() -> f64 {
    1.0
}

impl NoiseSpec {
    pub fn beta(&self) -> f64 {
        match self {
            NoiseSpec::Diagonal { beta, .. } | NoiseSpec::Dense { beta, .. } => *beta,
        }
    }

    /// Decay exponent `q` of `b_n ~ n^{-q}` for diagonal rules.
    pub fn decay(&self) -> Option<f64> {
        match self {
            NoiseSpec::Diagonal { decay, .. } => Some(*decay),
            NoiseSpec::Dense { .. } => None,
        }
    }

    /// Build for `h_dim` H-modes; relative matrix paths resolve against `base`.
    pub fn build(&self, h_dim: usize, base: Option<&Path>) -> Result<NoiseOperator> {
        match self {
            NoiseSpec::Diagonal {
                scale,
                decay,
                u_modes,
                beta,
            } => NoiseOperator::power_decay(h_dim, u_modes.unwrap_or(h_dim), *scale, *decay, *beta),
            NoiseSpec::Dense { file, beta } => {
                let path = match base {
                    Some(dir) => dir.join(file),
                    None => Path::new(file).to_path_buf(),
                };
                let (rows, cols, coeffs) = read_matrix_csv(&path)?;
                if rows != h_dim {
                    return Err(Error::Dimension {
                        expected: h_dim,
                        got: rows,
                    });
                }
                NoiseOperator::new(rows, cols, coeffs, *beta)
            }
        }
    }
}

fn read_matrix_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::MatrixFile(format!("{}: {e}", path.display())))?;
    let mut coeffs = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::MatrixFile(e.to_string()))?;
        let row: Vec<f64> = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MatrixFile(format!("row {}: {e}", rows + 1)))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::MatrixFile(format!(
                    "row {} has {} entries, expected {c}",
                    rows + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        coeffs.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::MatrixFile("empty matrix".into()))?;
    Ok((rows, cols, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;
    use std::f64::consts::PI;

    #[test]
    fn hs_norm_examples() {
        let op = SpectralOperator::new(vec![-4.0]).unwrap();
        let b = NoiseOperator::new(1, 1, vec![2.0], 0.0).unwrap();
        assert!((b.hs_norm(&op, 0.5) - 4.0).abs() < 1e-14);
        assert_eq!(NoiseOperator::zero(1, 3).hs_norm(&op, 0.5), 0.0);

        // partial sums of n^-4 towards pi^4 / 90
        let n = 200;
        let op = SpectralOperator::dirichlet_laplacian(n, 1.0).unwrap();
        let b = NoiseOperator::power_decay(n, n, 1.0, 2.0, 0.0).unwrap();
        let partial: f64 = (1..=n).map(|k| (k as f64).powi(-4)).sum();
        assert!((b.hs_norm(&op, 0.0) - partial.sqrt()).abs() < 1e-14);
        assert!((b.hs_norm(&op, 0.0) - (PI.powi(4) / 90.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn adjoint_identity() {
        let b = NoiseOperator::new(2, 3, vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.5], 0.0).unwrap();
        let u = [0.3, -1.0, 2.0];
        let h = [1.5, -0.25];
        let lhs: f64 = b.apply(&u).iter().zip(&h).map(|(a, b)| a * b).sum();
        let rhs: f64 = b.adjoint_apply(&h).iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn scalar_covariance_examples() {
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        let b = NoiseOperator::new(1, 1, vec![1.0], 0.0).unwrap();
        let cov = IncrementCovariance::new(&op, &b, 1.0).unwrap();
        assert!((cov.cov_yy(0, 0) - (1.0 - (-2f64).exp()) / 2.0).abs() < 1e-15);
        assert!((cov.cov_yy(0, 0) - 0.432_332_358_4).abs() < 1e-9);
        assert!((cov.cov_yw(0, 0) - 0.632_120_558_8).abs() < 1e-9);
        assert_eq!(cov.cov_ww(0, 0), 1.0);
        assert_eq!(cov.jitter(), 0.0);
    }

    #[test]
    fn zero_noise_gives_zero_convolution() {
        let op = SpectralOperator::dirichlet_laplacian(3, 1.0).unwrap();
        let b = NoiseOperator::zero(3, 2);
        let cov = IncrementCovariance::new(&op, &b, 0.1).unwrap();
        let mut rng = path_rng(1, 0);
        for _ in 0..50 {
            let (y, dw) = sample_coupled_increment(&cov, &mut rng);
            assert_eq!(y.0, vec![0.0; 3]);
            assert!(dw.iter().all(|w| *w != 0.0));
        }
        let (y, _) = brute_force_convolution_oracle(&op, &b, 0.1, 7, &mut rng).unwrap();
        assert_eq!(y.0, vec![0.0; 3]);
    }

    #[test]
    fn small_step_limits_are_first_order() {
        let op = SpectralOperator::new(vec![-1.0, -2.0, -3.0]).unwrap();
        let b = NoiseOperator::new(3, 2, vec![1.0, 0.2, -0.5, 0.7, 0.1, 0.3], 0.0).unwrap();
        let g = b.gram();
        let mut errs = Vec::new();
        for h in [1e-2, 1e-3, 1e-4] {
            let cov = IncrementCovariance::new(&op, &b, h).unwrap();
            let mut e: f64 = 0.0;
            for n in 0..3 {
                for m in 0..3 {
                    e = e.max((cov.cov_yy(n, m) / h - g[n * 3 + m]).abs());
                }
                for j in 0..2 {
                    e = e.max((cov.cov_yw(n, j) / h - b.coeff(n, j)).abs());
                }
            }
            errs.push(e);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((8.0..12.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn single_substep_oracle_is_damped_increment() {
        let op = SpectralOperator::new(vec![-2.0, -3.0]).unwrap();
        let b = NoiseOperator::new(2, 2, vec![1.0, 0.5, 0.0, 2.0], 0.0).unwrap();
        let (y, dw) = brute_force_convolution_oracle(&op, &b, 0.3, 1, &mut path_rng(5, 1)).unwrap();
        let expected = op.semigroup_apply(0.3, &b.apply(&dw)).unwrap();
        assert!(y.sub(&expected).norm() < 1e-15);
    }

    #[test]
    fn deterministic_sampling() {
        let op = SpectralOperator::dirichlet_laplacian(4, 1.0).unwrap();
        let b = NoiseOperator::power_decay(4, 4, 1.0, 2.0, 0.0).unwrap();
        let cov = IncrementCovariance::new(&op, &b, 0.05).unwrap();
        let a = sample_coupled_increment(&cov, &mut path_rng(11, 2));
        let c = sample_coupled_increment(&cov, &mut path_rng(11, 2));
        assert_eq!(a, c);
    }

    #[test]
    fn diagonal_noise_factor_stays_sparse() {
        let n = 32;
        let op = SpectralOperator::dirichlet_laplacian(n, 1.0).unwrap();
        let b = NoiseOperator::power_decay(n, n, 1.0, 2.0, 0.0).unwrap();
        let cov = IncrementCovariance::new(&op, &b, 1.0 / 64.0).unwrap();
        assert!(cov.factor().nonzeros() <= 3 * n);
    }

    #[test]
    fn tail_variance_matches_spatial_error() {
        let op = SpectralOperator::dirichlet_laplacian(20, 1.0).unwrap();
        let b = NoiseOperator::power_decay(20, 20, 1.0, 2.0, 0.0).unwrap();
        let kept = ProjectionIndex::prefix(5, 20);
        let v = convolution_tail_variance(&op, &b, &kept, 0.7, 0.0);
        assert!((v.sqrt() - spatial_truncation_error(&op, &b, 5, 0.7)).abs() < 1e-15);
        assert_eq!(
            convolution_tail_variance(&op, &b, &ProjectionIndex::all(20), 1.0, 0.3),
            0.0
        );
    }

    #[test]
    fn damped_integral_small_argument() {
        let h = 0.5;
        assert!((damped_integral(-1e-12, h) - h * (1.0 - 0.25e-12)).abs() < 1e-16);
        assert!((damped_integral(-2.0, h) - (1.0 - (-1f64).exp()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_step() {
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        let b = NoiseOperator::new(1, 1, vec![1.0], 0.0).unwrap();
        assert!(IncrementCovariance::new(&op, &b, 0.0).is_err());
        assert!(IncrementCovariance::new(&op, &b, -1.0).is_err());
    }

    #[test]
    fn dense_matrix_from_csv() {
        let dir = std::env::temp_dir().join(format!("stoconv-noise-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("b.csv"), "1.0, 0.5\n0.0, 0.25\n").unwrap();
        let spec = NoiseSpec::Dense {
            file: "b.csv".into(),
            beta: 0.0,
        };
        let b = spec.build(2, Some(&dir)).unwrap();
        assert_eq!(b.u_dim(), 2);
        assert_eq!(b.coeff(0, 1), 0.5);
        assert!(spec.build(3, Some(&dir)).is_err());
        std::fs::write(dir.join("bad.csv"), "1.0, x\n").unwrap();
        let bad = NoiseSpec::Dense {
            file: "bad.csv".into(),
            beta: 0.0,
        };
        assert!(matches!(
            bad.build(1, Some(&dir)),
            Err(Error::MatrixFile(_))
        ));
    }

    #[test]
    fn spatial_error_matches_variance_tail() {
        let op = SpectralOperator::dirichlet_laplacian(10, 1.0).unwrap();
        let b = NoiseOperator::power_decay(10, 10, 1.0, 2.0, 0.0).unwrap();
        let v = convolution_variance(&op, &b, 1.0);
        let tail: f64 = v[4..].iter().sum();
        assert!((spatial_truncation_error(&op, &b, 4, 1.0) - tail.sqrt()).abs() < 1e-16);
        // closed form of mode 1
        let l = -PI * PI;
        assert!((v[0] - (1.0 - (2.0 * l).exp()) / (-2.0 * l)).abs() < 1e-16);
    }
}
