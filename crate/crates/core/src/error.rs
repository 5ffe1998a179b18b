use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("SVD did not converge after {iterations} iterations")]
    SvdNonConvergence { iterations: usize },

    #[error("enumeration over 2^{d} masks exceeds the bound d <= {max}; use the Monte Carlo estimator")]
    Capacity { d: usize, max: usize },

    #[error("training diverged at iteration {iteration} (objective = {value})")]
    Divergence { iteration: usize, value: f64 },

    #[error("iterative solver did not converge within {iterations} iterations (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },

    #[error("singular values must be sorted in descending order (index {index})")]
    Unsorted { index: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("{path}: row {row} has {got} columns, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Error {
    Error::Shape {
        op,
        expected: expected.into(),
        got: got.into(),
    }
}

/// Checks `0 < value < 1`.
pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            value,
            reason: "must lie strictly inside (0, 1)",
        })
    }
}
