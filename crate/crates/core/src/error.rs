use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid distribution at {field}: {reason}")]
    InvalidDistribution { field: String, reason: String },

    #[error("distribution is not centered: mean = {mean:e}")]
    NotCentered { mean: f64 },

    #[error("distribution is not symmetric at atom x = {x}: P(x) = {p}, P(-x) = {p_mirror}")]
    NotSymmetric { x: f64, p: f64, p_mirror: f64 },

    #[error("evaluator `{label}` failed at y = {at}")]
    EvaluatorFailure { label: String, at: f64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("quadrature did not converge: estimate {estimate}, achieved error {achieved:e} > tolerance {tolerance:e}")]
    QuadratureNotConverged {
        estimate: f64,
        achieved: f64,
        tolerance: f64,
    },

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("json: {0}")]
    Json(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
