use thiserror::Error;

/// Errors produced by the learners and the supporting numerics.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed validation before any computation started.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A linear system that the caller assumed invertible is numerically
    /// singular. The message says which alternative route to take.
    #[error("singular system: {0}")]
    Singular(String),

    /// The test feature has no component outside the training row space, so
    /// the norm-constrained path divides by zero. Use the ridge path instead.
    #[error("test feature lies in the training row space (|x_perp| = {x_perp_norm:.3e}); use the under-parameterized pNML path")]
    InSpan { x_perp_norm: f64 },

    /// An iterative routine (root finder, quadrature, gradient training)
    /// failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { expected, got }
    }
}
