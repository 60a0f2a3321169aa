use crate::controller::IntegrationTrace;

/// Errors from coefficient generation, stage solves and integration drivers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("times must be strictly increasing with positive stepsizes")]
    NonIncreasingTimes,
    #[error("window of {got} points is too short, need at least {need}")]
    WindowTooShort { need: usize, got: usize },
    #[error("unsupported order p = {0}, supported range is 1..=5")]
    UnsupportedOrder(usize),
    #[error("stepsize ratios must be positive and finite, got {0}")]
    NonPositiveRatio(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("problem `{0}` has no exact solution")]
    NoExactSolution(String),
    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        trace: Box<IntegrationTrace>,
    },
}
