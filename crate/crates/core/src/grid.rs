//! Partitions of `[0, T]` containing both endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Nodes {
    /// `{m T / M : m = 0..=M}`, evaluated on demand from the integer index.
    Uniform {
        steps: usize,
    },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    nodes: Nodes,
}

impl TimeGrid {
    /// `{0, T/M, ..., T}`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        check_horizon(horizon)?;
        if steps == 0 {
            return Err(Error::InvalidGrid(
                "a uniform grid needs M >= 1 steps".into(),
            ));
        }
        Ok(TimeGrid {
            horizon,
            nodes: Nodes::Uniform { steps },
        })
    }

    /// Arbitrary partition; must be strictly increasing, start at 0 and end at
    /// `horizon`.
    pub fn explicit(horizon: f64, nodes: Vec<f64>) -> Result<Self> {
        check_horizon(horizon)?;
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least the nodes 0 and T".into()));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != horizon {
            return Err(Error::InvalidGrid(format!(
                "nodes must start at 0 and end at T = {horizon}"
            )));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "nodes must be strictly increasing".into(),
            ));
        }
        Ok(TimeGrid {
            horizon,
            nodes: Nodes::Explicit(nodes),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of subintervals.
    pub fn steps(&self) -> usize {
        match &self.nodes {
            Nodes::Uniform { steps } => *steps,
            Nodes::Explicit(v) => v.len() - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.nodes, Nodes::Uniform { .. })
    }

    pub fn node(&self, index: usize) -> f64 {
        match &self.nodes {
            Nodes::Uniform { steps } => {
                assert!(index <= *steps, "node index {index} beyond grid");
                if index == *steps {
                    self.horizon
                } else {
                    index as f64 * self.horizon / *steps as f64
                }
            }
            Nodes::Explicit(v) => v[index],
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Length of the `index`-th subinterval `[t_index, t_{index+1}]`.
    pub fn gap(&self, index: usize) -> f64 {
        match &self.nodes {
            Nodes::Uniform { steps } => self.horizon / *steps as f64,
            Nodes::Explicit(_) => self.node(index + 1) - self.node(index),
        }
    }

    /// `|theta|_T`, the largest gap between consecutive nodes.
    pub fn mesh(&self) -> f64 {
        match &self.nodes {
            Nodes::Uniform { steps } => self.horizon / *steps as f64,
            Nodes::Explicit(v) => v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max),
        }
    }

    /// Index of `floor_node(t)`.
    pub fn floor_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        if t == 0.0 {
            return Ok(0);
        }
        match &self.nodes {
            Nodes::Uniform { steps } => {
                let guess = ((t / self.horizon) * *steps as f64).ceil() as usize;
                let mut m = guess.clamp(1, *steps) - 1;
                while m + 1 < *steps && self.node(m + 1) < t {
                    m += 1;
                }
                while m > 0 && self.node(m) >= t {
                    m -= 1;
                }
                Ok(m)
            }
            Nodes::Explicit(v) => Ok(v.partition_point(|&x| x < t) - 1),
        }
    }

    /// `max([0, t) ∩ theta)` for `t > 0` and `0` for `t = 0`. At a node
    /// `t_m > 0` this is the previous node `t_{m-1}`.
    pub fn floor_node(&self, t: f64) -> Result<f64> {
        Ok(self.node(self.floor_index(t)?))
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGrid(format!(
            "horizon {horizon} must be positive"
        )))
    }
}

/// `uniform_grid(T, M)`.
pub fn uniform_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::uniform(horizon, steps)
}

/// Grid description as found in experiment configs; the horizon is supplied
/// separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    Uniform { steps: usize },
    Explicit { nodes: Vec<f64> },
}

impl GridSpec {
    pub fn build(&self, horizon: f64) -> Result<TimeGrid> {
        match self {
            GridSpec::Uniform { steps } => TimeGrid::uniform(horizon, *steps),
            GridSpec::Explicit { nodes } => TimeGrid::explicit(horizon, nodes.clone()),
        }
    }
}
