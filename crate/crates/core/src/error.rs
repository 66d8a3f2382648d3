use thiserror::Error;

/// Errors raised by the solvers, evaluators and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e}, scale {scale:.3e})")]
    NotHermitian { asymmetry: f64, scale: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("eigenvalue iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("invalid quantizer bit depth {0}")]
    InvalidBits(i64),

    #[error("negative transmit power {value} at index {index}")]
    NegativePower { index: usize, value: f64 },

    #[error("target SINRs appear infeasible: {0}")]
    Infeasible(String),

    #[error("downlink scaling produced non-positive tau {value:.3e} at index {index}")]
    NonPositiveTau { index: usize, value: f64 },

    #[error("downlink constraint matrix is singular (condition {0:.3e})")]
    SingularSigma(f64),

    #[error("in-cell channel of cell {0} is rank deficient")]
    RankDeficient(usize),

    #[error("closed-form power system is singular (condition {0:.3e})")]
    SingularSystem(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
