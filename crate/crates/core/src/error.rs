use thiserror::Error;

use crate::pulsefit::GaussianMixtureFit;

pub type Result<T, E = ClickError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ClickError {
    /// A parameter violates a type invariant (negative rate, efficiency > 1, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An argument lies outside the domain where the formula is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Q parameters need a mean strictly between 0 and N.
    #[error("Q parameter undefined: {0}")]
    UndefinedQ(String),

    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("ill-posed inversion (log10 condition number {log10_condition:.1}): {reason}")]
    IllPosedInversion { reason: String, log10_condition: f64 },

    #[error("target Q = {target} is outside the bracket [0, {upper}] reachable with chi <= {chi_max}")]
    OutOfBracket { target: f64, upper: f64, chi_max: f64 },

    #[error("fit initialization failed: {0}")]
    InitializationFailed(String),

    /// Carries the best state reached before the optimizer gave up.
    #[error("fit failed after {} iterations: {reason}", best.n_iterations)]
    FitFailed {
        reason: String,
        best: Box<GaussianMixtureFit>,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

impl ClickError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ClickError::InvalidParameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ClickError::Domain(msg.into())
    }
}
