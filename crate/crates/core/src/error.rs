use alloc::string::String;

/// Errors produced by the estimation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("innovation covariance not positive definite at t = {t}")]
    InnovationNotPositiveDefinite { t: usize },

    #[error("predicted covariance singular or indefinite at t = {t}")]
    SingularPredictedCovariance { t: usize },

    #[error("non-positive effective denominator {value} for coefficient (j={j}, k={k}, t={t})")]
    NonPositiveDenominator { j: usize, k: usize, t: usize, value: f64 },

    #[error("non-positive forecast variance at (j={j}, t={t})")]
    NonPositiveForecastVariance { j: usize, t: usize },

    #[error("volatility mode undefined: degrees of freedom {eta} <= 1 at t = {t}")]
    ModeUndefined { t: usize, eta: f64 },

    #[error("cholesky factorization failed at t = {t} after regularization")]
    CholeskyFailed { t: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid init strategy: {0}")]
    InvalidInit(String),
}

pub type Result<T> = core::result::Result<T, Error>;
