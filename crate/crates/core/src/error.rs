//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed case file: missing block, bad token, wrong arity.
    #[error("parse error: {0}")]
    Parse(String),

    /// Structurally valid input that violates a model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Bad scenario data (horizon, profile, commitment parameters).
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Mismatched vector lengths between state blocks and the layout.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A kernel or the engine produced or encountered non-finite values,
    /// a singular system, or exceeded a divergence guard.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
