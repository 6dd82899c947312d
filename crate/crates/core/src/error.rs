//! Crate-wide error type.

/// Errors produced by construction, simulation, filtering, and the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter violates its documented constraint.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Two objects that must share a shape (lattice, dimension, step count) do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Every particle carries zero weight; the ensemble cannot be normalized.
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    /// A dense factorization or solve failed (non-SPD matrix, singular system).
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    /// Adaptive tempering failed to reach temperature 1 within the level budget.
    #[error("tempering did not reach temperature 1 within {max} levels")]
    TemperingOverflow { max: usize },

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// The experiment configuration is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Serialization or deserialization of a record file failed.
    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
