//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by nullforge operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is out of its legal range.
    #[error("parameter error: {0}")]
    Param(String),

    /// Input data violates a precondition (shape, symmetry, finiteness, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Shapes of two operands are incompatible.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// An iterative eigensolver or SVD exceeded its sweep cap.
    #[error("{algorithm} did not converge on a {rows}x{cols} matrix after {sweeps} sweeps")]
    NonConvergence {
        algorithm: &'static str,
        rows: usize,
        cols: usize,
        sweeps: usize,
    },

    /// Gradient descent produced a non-finite loss.
    #[error("training diverged at step {step} (learning rate {learning_rate}): loss is not finite")]
    Divergence { step: usize, learning_rate: f64 },

    /// A matrix file is malformed. `offset` is the byte position of the failure.
    #[error("matrix file error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    /// A saved adapter bundle fails its reconstruction self-check on load.
    #[error(
        "bundle reconstruction mismatch: recomputed error {recomputed:e} exceeds 2x stored {stored:e}"
    )]
    ReconstructionMismatch { recomputed: f64, stored: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
