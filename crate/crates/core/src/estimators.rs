//! Monte Carlo estimators over grid nodes and log-log rate fits.
//!
//! Suprema over `[0, T]` are taken over grid nodes only ("grid sup"). Standard
//! errors come from per-node sample variances, pushed through `x -> x^{1/p}`
//! with the delta method at the maximizing node.

use serde::{Deserialize, Serialize};

use crate::error::{range_error, Error, Result};
use crate::scheme::CoupledTrajectory;
use crate::spectral::{SpectralOperator, StateVector};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replications: usize,
    pub seed: u64,
}

impl McEstimate {
    /// `value + k * std_error`.
    pub fn upper(&self, k: f64) -> f64 {
        self.value + k * self.std_error
    }

    /// The comparison used throughout: `value + 3 std_error <= bound`.
    pub fn within(&self, bound: f64) -> bool {
        self.upper(3.0) <= bound
    }
}

/// Per-path, per-node scalar samples stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSamples {
    nodes: usize,
    data: Vec<f64>,
}

impl NodeSamples {
    pub fn new(nodes: usize) -> Self {
        NodeSamples {
            nodes,
            data: Vec::new(),
        }
    }

    pub fn from_rows(nodes: usize, rows: impl IntoIterator<Item = Vec<f64>>) -> Self {
        let mut s = NodeSamples::new(nodes);
        for r in rows {
            s.push(&r);
        }
        s
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.nodes, "row length differs from node count");
        self.data.extend_from_slice(row);
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn replications(&self) -> usize {
        self.data.len().checked_div(self.nodes).unwrap_or(0)
    }

    pub fn row(&self, path: usize) -> &[f64] {
        &self.data[path * self.nodes..(path + 1) * self.nodes]
    }

    /// Samples at one node in path order.
    pub fn column(&self, node: usize) -> impl Iterator<Item = f64> + '_ {
        self.data
            .iter()
            .skip(node)
            .step_by(self.nodes.max(1))
            .copied()
    }

    /// Sample mean and standard error of the mean at `node`.
    pub fn mean_and_se(&self, node: usize) -> (f64, f64) {
        let r = self.replications();
        let mean = self.column(node).sum::<f64>() / r as f64;
        if r < 2 {
            return (mean, 0.0);
        }
        let var = self.column(node).map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        (mean, (var / r as f64).sqrt())
    }

    fn check(&self) -> Result<()> {
        if self.replications() == 0 {
            Err(Error::EmptyBatch)
        } else {
            Ok(())
        }
    }
}

/// Per-node sample means and standard errors.
pub trait NodeStatistics {
    fn nodes(&self) -> usize;
    fn replications(&self) -> usize;
    /// Sample mean and standard error of the mean at `node`.
    fn mean_and_se(&self, node: usize) -> (f64, f64);
}

impl NodeStatistics for NodeSamples {
    fn nodes(&self) -> usize {
        NodeSamples::nodes(self)
    }

    fn replications(&self) -> usize {
        NodeSamples::replications(self)
    }

    fn mean_and_se(&self, node: usize) -> (f64, f64) {
        NodeSamples::mean_and_se(self, node)
    }
}

/// Streaming per-node mean and variance (Welford). Rows must be pushed in a
/// fixed order for bit-reproducible results.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl NodeAccumulator {
    pub fn new(nodes: usize) -> Self {
        NodeAccumulator {
            count: 0,
            mean: vec![0.0; nodes],
            m2: vec![0.0; nodes],
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(
            row.len(),
            self.mean.len(),
            "row length differs from node count"
        );
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(row) {
            let d = x - *m;
            *m += d / n;
            *m2 += d * (x - *m);
        }
    }
}

impl NodeStatistics for NodeAccumulator {
    fn nodes(&self) -> usize {
        self.mean.len()
    }

    fn replications(&self) -> usize {
        self.count
    }

    fn mean_and_se(&self, node: usize) -> (f64, f64) {
        let mean = self.mean[node];
        if self.count < 2 {
            return (mean, 0.0);
        }
        let var = self.m2[node] / (self.count - 1) as f64;
        (mean, (var / self.count as f64).sqrt())
    }
}

/// `(E X)^{1/p}` with delta-method standard error from the mean and its error.
fn root_of_mean(mean: f64, se: f64, p: f64) -> (f64, f64) {
    if mean <= 0.0 {
        return (0.0, if p == 1.0 { se } else { 0.0 });
    }
    let value = mean.powf(1.0 / p);
    (value, se * value / (p * mean))
}

/// `max_node (mean_node)^{1/p} * weight_node` where the samples already hold
/// `|·|^p`; the standard error is taken at the maximizing node.
pub fn sup_root_mean<S: NodeStatistics>(samples: &S, p: f64, seed: u64) -> Result<McEstimate> {
    sup_root_mean_weighted(samples, p, |_| 1.0, seed)
}

fn sup_root_mean_weighted<S: NodeStatistics>(
    samples: &S,
    p: f64,
    weight: impl Fn(usize) -> f64,
    seed: u64,
) -> Result<McEstimate> {
    if samples.replications() == 0 || samples.nodes() == 0 {
        return Err(Error::EmptyBatch);
    }
    check_p(p)?;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for node in 0..samples.nodes() {
        let (mean, se) = samples.mean_and_se(node);
        let (v, s) = root_of_mean(mean, se, p);
        let w = weight(node);
        if v * w > best.0 {
            best = (v * w, s * w);
        }
    }
    Ok(McEstimate {
        value: best.0.max(0.0),
        std_error: best.1,
        replications: samples.replications(),
        seed,
    })
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(range_error("p", p, "moment order must be at least 1"))
    }
}

/// `||(-A)^γ x||_H^p` for every node of a path.
pub fn node_norms_pow(op: &SpectralOperator, path: &[StateVector], p: f64, gamma: f64) -> Vec<f64> {
    path.iter()
        .map(|x| op.fractional_norm(gamma, x).powf(p))
        .collect()
}

/// `||(-A)^γ (a - b)||_H^p` for every node.
pub fn node_errors_pow(
    op: &SpectralOperator,
    a: &[StateVector],
    b: &[StateVector],
    p: f64,
    gamma: f64,
) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| op.fractional_norm(gamma, &x.sub(y)).powf(p))
        .collect()
}

fn batch_nodes(batch: &[CoupledTrajectory]) -> Result<usize> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let n = first.nodes();
    if batch.iter().any(|t| t.nodes() != n) {
        return Err(Error::InvalidGrid(
            "trajectories use different grids".into(),
        ));
    }
    Ok(n)
}

/// Grid sup of `(E ||(-A)^γ (O^{θ,I,J}_t - O_t)||_H^p)^{1/p}`.
pub fn lp_error_sup(
    batch: &[CoupledTrajectory],
    op: &SpectralOperator,
    p: f64,
    gamma: f64,
    seed: u64,
) -> Result<McEstimate> {
    check_p(p)?;
    let nodes = batch_nodes(batch)?;
    let s = NodeSamples::from_rows(
        nodes,
        batch
            .iter()
            .map(|t| node_errors_pow(op, &t.scheme, &t.exact, p, gamma)),
    );
    sup_root_mean(&s, p, seed)
}

/// Grid sup of `(E ||O^{θ,I,J}_t||_{H_γ}^p)^{1/p}`.
pub fn empirical_moment(
    batch: &[CoupledTrajectory],
    op: &SpectralOperator,
    p: f64,
    gamma: f64,
    seed: u64,
) -> Result<McEstimate> {
    check_p(p)?;
    let nodes = batch_nodes(batch)?;
    let s = NodeSamples::from_rows(
        nodes,
        batch
            .iter()
            .map(|t| node_norms_pow(op, &t.scheme, p, gamma)),
    );
    sup_root_mean(&s, p, seed)
}

/// Exponential moment estimate with a heavy-tail diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentEstimate {
    pub estimate: McEstimate,
    /// Top 0.1% of samples carry more than half of the mean at the sup node.
    pub heavy_tail: bool,
    /// Node attaining the sup.
    pub node: usize,
}

/// Grid sup of `E exp(ε ||O_t||_H²)` from samples of `||O_t||_H²`, evaluated in
/// log-sum-exp form.
pub fn exp_moment_from_sq_norms(
    sq_norms: &NodeSamples,
    eps: f64,
    seed: u64,
) -> Result<ExpMomentEstimate> {
    sq_norms.check()?;
    if !(eps >= 0.0) {
        return Err(range_error("eps", eps, "must be nonnegative"));
    }
    let r = sq_norms.replications();
    let mut best: Option<(f64, f64, f64, usize)> = None; // (log mean, value, se, node)
    for node in 0..sq_norms.nodes() {
        let shift = sq_norms
            .column(node)
            .map(|x| eps * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let scaled_mean = sq_norms
            .column(node)
            .map(|x| (eps * x - shift).exp())
            .sum::<f64>()
            / r as f64;
        let log_mean = shift + scaled_mean.ln();
        if best.is_none_or(|b| log_mean > b.0) {
            let scaled_var = if r > 1 {
                sq_norms
                    .column(node)
                    .map(|x| ((eps * x - shift).exp() - scaled_mean).powi(2))
                    .sum::<f64>()
                    / (r - 1) as f64
            } else {
                0.0
            };
            let scale = shift.exp();
            best = Some((
                log_mean,
                log_mean.exp(),
                scale * (scaled_var / r as f64).sqrt(),
                node,
            ));
        }
    }
    let (_, value, se, node) = best.expect("at least one node");
    Ok(ExpMomentEstimate {
        estimate: McEstimate {
            value,
            std_error: se,
            replications: r,
            seed,
        },
        heavy_tail: heavy_tail(sq_norms.column(node).map(|x| eps * x).collect()),
        node,
    })
}

/// Whether the largest 0.1% of `exp(log_terms)` carry more than half the sum.
fn heavy_tail(mut log_terms: Vec<f64>) -> bool {
    if log_terms.is_empty() {
        return false;
    }
    log_terms.sort_by(|a, b| b.total_cmp(a));
    let shift = log_terms[0];
    let weights: Vec<f64> = log_terms.iter().map(|x| (x - shift).exp()).collect();
    let total: f64 = weights.iter().sum();
    let top = weights.len().div_ceil(1000);
    let top_sum: f64 = weights[..top].iter().sum();
    top_sum > 0.5 * total
}

/// Grid sup of `E exp(ε ||O^{θ,I,J}_t||_H²)`.
pub fn empirical_exp_moment(
    batch: &[CoupledTrajectory],
    eps: f64,
    seed: u64,
) -> Result<ExpMomentEstimate> {
    let nodes = batch_nodes(batch)?;
    let s = NodeSamples::from_rows(
        nodes,
        batch
            .iter()
            .map(|t| t.scheme.iter().map(StateVector::norm_sq).collect()),
    );
    exp_moment_from_sq_norms(&s, eps, seed)
}

/// Ordered node pair `(s, t)` with `s < t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePair {
    pub s: usize,
    pub t: usize,
}

impl NodePair {
    pub fn new(s: usize, t: usize) -> Result<Self> {
        if s >= t {
            return Err(Error::InvalidGrid(format!(
                "node pair ({s}, {t}) must satisfy s < t"
            )));
        }
        Ok(NodePair { s, t })
    }
}

/// `||(-A)^γ (O_t - O_s)||_H^p` for every pair.
pub fn pair_increments_pow(
    op: &SpectralOperator,
    path: &[StateVector],
    pairs: &[NodePair],
    p: f64,
    gamma: f64,
) -> Vec<f64> {
    pairs
        .iter()
        .map(|q| {
            op.fractional_norm(gamma, &path[q.t].sub(&path[q.s]))
                .powf(p)
        })
        .collect()
}

/// Max over pairs of `(E ||O_t - O_s||_{H_γ}^p)^{1/p} / (t - s)^ρ` from
/// per-pair samples of `||O_t - O_s||_{H_γ}^p`.
pub fn holder_from_samples<S: NodeStatistics>(
    samples: &S,
    times: &[f64],
    pairs: &[NodePair],
    p: f64,
    rho: f64,
    seed: u64,
) -> Result<McEstimate> {
    if pairs.is_empty() || samples.nodes() != pairs.len() {
        return Err(Error::InvalidGrid("one sample column per node pair".into()));
    }
    for q in pairs {
        if q.s >= q.t || q.t >= times.len() {
            return Err(Error::InvalidGrid(format!(
                "invalid node pair ({}, {})",
                q.s, q.t
            )));
        }
    }
    sup_root_mean_weighted(
        samples,
        p,
        |k| (times[pairs[k].t] - times[pairs[k].s]).powf(-rho),
        seed,
    )
}

/// Empirical Hölder quotient of the scheme over the given node pairs.
pub fn holder_quotient(
    batch: &[CoupledTrajectory],
    op: &SpectralOperator,
    p: f64,
    gamma: f64,
    rho: f64,
    pairs: &[NodePair],
    seed: u64,
) -> Result<McEstimate> {
    check_p(p)?;
    batch_nodes(batch)?;
    let s = NodeSamples::from_rows(
        pairs.len(),
        batch
            .iter()
            .map(|t| pair_increments_pow(op, &t.scheme, pairs, p, gamma)),
    );
    holder_from_samples(&s, &batch[0].times, pairs, p, rho, seed)
}

/// Least-squares line through `(log scale, log error)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    /// Regression standard error of the slope; zero for three exact points.
    pub slope_std_error: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(s, e)) = points
        .iter()
        .find(|&&(s, e)| !(s > 0.0 && e > 0.0 && s.is_finite() && e.is_finite()))
    {
        return Err(Error::InvalidFit(format!(
            "scales and errors must be positive and finite, got ({s}, {e})"
        )));
    }
    let increasing = points.windows(2).all(|w| w[1].0 > w[0].0);
    let decreasing = points.windows(2).all(|w| w[1].0 < w[0].0);
    if !(increasing || decreasing) {
        return Err(Error::InvalidFit("scales must be strictly monotone".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    // flat data is fitted exactly by a zero slope
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let slope_std_error = (ss_res.max(0.0) / (n - 2.0) / sxx).sqrt();
    Ok(RateFit {
        points: points.to_vec(),
        slope,
        slope_std_error,
        intercept,
        r_squared,
    })
}
