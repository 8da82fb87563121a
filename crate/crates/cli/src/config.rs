//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stoconv_core::{
    NoiseOperator, NoiseSpec, OperatorSpec, ProjectionIndex, SpectralOperator, TruncationPolicy,
};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Smallest replication count accepted for bound comparisons.
pub const MIN_AUDIT_REPLICATIONS: usize = 100;

pub const DEFAULT_CONVERGENCE: &str = include_str!("../configs/convergence.toml");
pub const DEFAULT_BOUNDS_AUDIT: &str = include_str!("../configs/bounds-audit.toml");
pub const DEFAULT_SELFTEST: &str = include_str!("../configs/selftest.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    pub replications: usize,
    pub horizon: f64,
    pub operator: OperatorSpec,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub policy: TruncationPolicy,
    /// Numbers of uniform time steps `M`.
    pub grids: Vec<usize>,
    pub projections: Vec<Projection>,
    /// Moment orders `p`.
    #[serde(default = "default_moments")]
    pub moments: Vec<f64>,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub selftest: SelftestSettings,
    /// CSV destination; the JSON summary goes next to it.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Directory that relative paths in the file resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Spatial truncation: the first `modes` H-modes and the first `u_modes`
/// U-modes (all of them when absent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Projection {
    pub modes: usize,
    #[serde(default)]
    pub u_modes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Parameters {
    pub gamma: Vec<f64>,
    pub eta: f64,
    pub rho: Vec<f64>,
    /// Exponential moment parameter; half the admissible maximum when absent.
    pub eps: Option<f64>,
    pub holder_pairs: usize,
    /// Values of `η` for the spectral tail check.
    pub tail_eta: Vec<f64>,
}

impl Default for Parameters {
    fn default() -> Self {
        Parameters {
            gamma: vec![0.0],
            eta: 0.25,
            rho: vec![0.25],
            eps: None,
            holder_pairs: 20,
            tail_eta: vec![0.1, 0.25, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelftestSettings {
    pub taming_cases: usize,
    pub covariance_paths: usize,
    pub quadrature_paths: usize,
    pub quadrature_substeps: usize,
    pub representation_substeps: Vec<usize>,
    pub representation_tolerance: f64,
    /// Allowed deviation of Monte Carlo moments in standard errors.
    pub z_tolerance: f64,
}

impl Default for SelftestSettings {
    fn default() -> Self {
        SelftestSettings {
            taming_cases: 100,
            covariance_paths: 100_000,
            quadrature_paths: 10_000,
            quadrature_substeps: 4096,
            representation_substeps: vec![16, 64, 256],
            representation_tolerance: 0.05,
            z_tolerance: 5.0,
        }
    }
}

fn default_moments() -> Vec<f64> {
    vec![2.0]
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid(
                "schema",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema
                ),
            ));
        }
        if self.replications < 2 {
            return Err(invalid("replications", "need at least 2"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive and finite"));
        }
        let op = self
            .operator
            .build()
            .map_err(|e| invalid("operator", e.to_string()))?;
        let b = self.build_noise(&op)?;
        if self.grids.is_empty() {
            return Err(invalid("grids", "need at least one grid"));
        }
        if self.grids.contains(&0) {
            return Err(invalid("grids", "step counts must be positive"));
        }
        if self.projections.is_empty() {
            return Err(invalid("projections", "need at least one projection"));
        }
        for p in &self.projections {
            if p.modes == 0 || p.modes > op.dim() {
                return Err(invalid(
                    "projections.modes",
                    format!("{} is outside 1..={}", p.modes, op.dim()),
                ));
            }
            if let Some(k) = p.u_modes {
                if k > b.u_dim() {
                    return Err(invalid(
                        "projections.u_modes",
                        format!("{k} exceeds the {} noise modes", b.u_dim()),
                    ));
                }
            }
        }
        if self.moments.is_empty() || self.moments.iter().any(|&p| !(p >= 1.0 && p.is_finite())) {
            return Err(invalid(
                "moments",
                "moment orders must be finite and at least 1",
            ));
        }
        let beta = b.beta();
        let par = &self.parameters;
        if par.gamma.is_empty() {
            return Err(invalid("parameters.gamma", "need at least one value"));
        }
        for &g in &par.gamma {
            if !(g >= 0.0 && g < 0.5 + beta) {
                return Err(invalid(
                    "parameters.gamma",
                    format!("{g} is outside [0, 1/2 + beta)"),
                ));
            }
        }
        if !(par.eta >= 0.0 && par.eta < 0.5 + beta) {
            return Err(invalid(
                "parameters.eta",
                format!("{} is outside [0, 1/2 + beta)", par.eta),
            ));
        }
        if par.rho.is_empty() {
            return Err(invalid("parameters.rho", "need at least one value"));
        }
        for &r in &par.rho {
            if !((0.0..0.5).contains(&r) && r < 0.5 + beta) {
                return Err(invalid(
                    "parameters.rho",
                    format!("{r} is outside [0, 1/2)"),
                ));
            }
        }
        if let Some(eps) = par.eps {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(invalid("parameters.eps", "must be finite and nonnegative"));
            }
        }
        if par.holder_pairs == 0 {
            return Err(invalid("parameters.holder_pairs", "need at least one pair"));
        }
        if par.tail_eta.iter().any(|&e| !(e >= 0.0)) {
            return Err(invalid("parameters.tail_eta", "values must be nonnegative"));
        }
        self.policy
            .validate()
            .map_err(|e| invalid("policy", e.to_string()))?;
        let st = &self.selftest;
        if st.quadrature_substeps == 0 || st.covariance_paths < 2 || st.quadrature_paths < 2 {
            return Err(invalid(
                "selftest",
                "path and substep counts must be positive",
            ));
        }
        let finest = st
            .representation_substeps
            .iter()
            .copied()
            .max()
            .unwrap_or(0);
        if finest == 0
            || st
                .representation_substeps
                .iter()
                .any(|&s| s == 0 || finest % s != 0)
        {
            return Err(invalid(
                "selftest.representation_substeps",
                "must be positive and divide the largest value",
            ));
        }
        Ok(())
    }

    /// Extra checks for experiments that compare estimates with bounds.
    pub fn validate_for_audit(&self) -> Result<()> {
        self.validate()?;
        if self.replications < MIN_AUDIT_REPLICATIONS {
            return Err(invalid(
                "replications",
                format!(
                    "bound comparisons need at least {MIN_AUDIT_REPLICATIONS}, got {}",
                    self.replications
                ),
            ));
        }
        Ok(())
    }

    pub fn build_operator(&self) -> Result<SpectralOperator> {
        self.operator
            .build()
            .map_err(|e| invalid("operator", e.to_string()))
    }

    pub fn build_noise(&self, op: &SpectralOperator) -> Result<NoiseOperator> {
        self.noise
            .build(op.dim(), self.base_dir.as_deref())
            .map_err(|e| invalid("noise", e.to_string()))
    }
}

impl Projection {
    pub fn indices(&self, h_dim: usize, u_dim: usize) -> (ProjectionIndex, ProjectionIndex) {
        let kept_u = match self.u_modes {
            Some(k) => ProjectionIndex::prefix(k, u_dim),
            None => ProjectionIndex::all(u_dim),
        };
        (ProjectionIndex::prefix(self.modes, h_dim), kept_u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_parse() {
        for text in [DEFAULT_CONVERGENCE, DEFAULT_BOUNDS_AUDIT, DEFAULT_SELFTEST] {
            let cfg = ExperimentConfig::from_toml(text).unwrap();
            assert_eq!(cfg.schema, SCHEMA_VERSION);
        }
        let audit = ExperimentConfig::from_toml(DEFAULT_BOUNDS_AUDIT).unwrap();
        assert!(audit.validate_for_audit().is_ok());
        assert_eq!(audit.parameters.gamma, vec![0.0, 0.25]);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(DEFAULT_CONVERGENCE).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    fn field_of(err: CliError) -> String {
        match err {
            CliError::Config { field, .. } => field,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn errors_name_the_offending_field() {
        let base = ExperimentConfig::from_toml(DEFAULT_CONVERGENCE).unwrap();
        let mut c = base.clone();
        c.schema = 7;
        assert_eq!(field_of(c.validate().unwrap_err()), "schema");
        let mut c = base.clone();
        c.parameters.rho = vec![0.5];
        assert_eq!(field_of(c.validate().unwrap_err()), "parameters.rho");
        let mut c = base.clone();
        c.projections[0].modes = 65;
        assert_eq!(field_of(c.validate().unwrap_err()), "projections.modes");
        let mut c = base.clone();
        c.replications = 50;
        assert!(c.validate().is_ok());
        assert_eq!(
            field_of(c.validate_for_audit().unwrap_err()),
            "replications"
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{DEFAULT_SELFTEST}\nbogus = 1\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&text),
            Err(CliError::Parse(_))
        ));
    }
}
