use thiserror::Error;

/// Errors raised by problem construction, validation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid uncertainty set: {0}")]
    InvalidUncertainty(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error(
        "noise violates the moment conditions: mean defect {mean_defect:.3e}, \
         covariance defect {covariance_defect:.3e} (tolerance {tolerance:.1e})"
    )]
    MomentDefect {
        mean_defect: f64,
        covariance_defect: f64,
        tolerance: f64,
    },

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("noise model `{0}` has no atoms or quadrature nodes; it can only be sampled")]
    UnsupportedNoise(String),

    #[error("unsupported uncertainty set for this solver: {0}")]
    UnsupportedUncertainty(String),

    #[error("time step {dt:.6e} violates the stability bound {bound:.6e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("policy mismatch: {0}")]
    PolicyMismatch(String),

    #[error("matrix is not orthogonal (defect {0:.3e})")]
    NotOrthogonal(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
