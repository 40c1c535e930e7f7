use thiserror::Error;

/// Errors surfaced by model construction, evaluation, and fitting.
#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a type invariant or an operation precondition.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical procedure failed to reach its accuracy target.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A fit was ill-posed or did not produce a usable result.
    #[error("fit error: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}

pub(crate) fn fit(msg: impl Into<String>) -> Error {
    Error::Fit(msg.into())
}

/// Checks that a value is finite and strictly positive.
pub(crate) fn require_positive(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(domain(format!("{name} must be finite and > 0, got {value}")))
    }
}

/// Checks that a value is finite.
pub(crate) fn require_finite(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(domain(format!("{name} must be finite, got {value}")))
    }
}
