use thiserror::Error;

/// Errors raised by the tail-modelling toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("confidence interval unavailable: {failed} of {total} resample fits failed")]
    CiUnavailable { failed: usize, total: usize },

    #[error("rate infeasible at target reliability ({which}): log2 argument {argument} <= 0")]
    RateInfeasible { which: &'static str, argument: f64 },

    #[error("insufficient diagnostics: need {needed} stability rows, got {got}")]
    InsufficientDiagnostics { needed: usize, got: usize },

    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
