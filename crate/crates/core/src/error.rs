use thiserror::Error;

/// Errors produced by market construction, validation and the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text (market files, numeric literals, allocation files).
    #[error("parse error: {0}")]
    Parse(String),

    /// Structurally well-formed input that violates a model invariant
    /// (non-positive value, zero budget, dimension mismatch, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// An enumeration would exceed the configured cap (see [`Caps`](crate::market::Caps)).
    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    /// A documented precondition of an operation does not hold for the input.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An internal invariant failed. These indicate a bug: the constructions in
    /// this crate are backed by proofs, so a failed re-verification is never a
    /// legitimate runtime condition.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
