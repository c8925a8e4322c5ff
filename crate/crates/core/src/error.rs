use std::io;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside the domain: {0}")]
    OutOfDomain(String),

    #[error("grid too coarse: {0}")]
    StencilDoesNotFit(String),

    #[error("field does not vanish on the boundary: {0}")]
    NonzeroBoundary(String),

    #[error("nonpositive value: {0}")]
    NonPositive(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("maximum-principle step restriction violated: {0}")]
    StepRestriction(String),

    #[error("covariance not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("empty chain")]
    EmptyChain,

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("replay differs from the recorded run: {0}")]
    Replay(String),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => "invalid-config",
            Error::OutOfDomain(_)
            | Error::StencilDoesNotFit(_)
            | Error::NonzeroBoundary(_)
            | Error::NonPositive(_) => "domain",
            Error::LinearSolve(_)
            | Error::StepRestriction(_)
            | Error::NotPositiveDefinite(_)
            | Error::EmptyChain => "numerical",
            Error::Schema(_) | Error::Json(_) | Error::Csv(_) => "format",
            Error::Io(_) => "io",
            Error::Replay(_) => "reproducibility",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
