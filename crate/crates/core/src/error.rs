use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("weight samples are not non-decreasing: log w drops at r = {r}")]
    Monotonicity { r: f64 },

    #[error("weight samples are not log-convex: hull deviation {deviation:.3e} at r = {r}")]
    Convexity { r: f64, deviation: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("gap selection failed at r = {radius}: {reason}")]
    Construction { radius: f64, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("quadrature did not converge: {0}")]
    Accuracy(String),

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("pipeline failure: {0}")]
    Pipeline(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
