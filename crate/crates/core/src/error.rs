use std::fmt;

use thiserror::Error;

/// Which family of normal-equation systems a conditioning failure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Row system `det(B' W^i B)`, solved when updating row `i` of `A`.
    Row,
    /// Column system `det(A' W_j A)`, solved when updating row `j` of `B`.
    Column,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Row => f.write_str("row"),
            Axis::Column => f.write_str("column"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix must have at least one row and one column")]
    Empty,

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("weights sum to zero")]
    DegenerateWeights,

    #[error("negative weight {value} at ({row}, {col}) where nonnegative weights are required")]
    NegativeWeight { row: usize, col: usize, value: f64 },

    #[error("singular normal equations: |det| = {det:e} is below threshold {threshold:e}")]
    SingularSystem { det: f64, threshold: f64 },

    #[error("ill-conditioned {axis} system {index}{}", iteration.map(|k| format!(" at iteration {k}")).unwrap_or_default())]
    Conditioning {
        axis: Axis,
        index: usize,
        iteration: Option<usize>,
    },

    #[error("rank {rank} is invalid, must satisfy 1 <= p < {bound}")]
    Rank { rank: usize, bound: usize },

    #[error("vector {index} is linearly dependent on the preceding vectors")]
    DependentSet { index: usize },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("iteration diverged at step {iteration}")]
    Divergence { iteration: usize },

    #[error("seed is not stationary: gradient residual {residual:e} exceeds {tolerance:e}")]
    InvalidSeed { residual: f64, tolerance: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
