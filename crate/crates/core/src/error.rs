use alloc::string::String;

/// Errors reported by the model, estimators and statistics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its valid range.
    #[error("invalid parameter `{name}`: {value}")]
    InvalidParameter {
        /// Parameter name.
        name: &'static str,
        /// Offending value.
        value: f64,
    },
    /// An observation lies outside the support of the distribution.
    #[error("increment {delta} is below the lower boundary {lower}")]
    OutOfSupport {
        /// Increment value.
        delta: f64,
        /// Lower boundary of the support.
        lower: f64,
    },
    /// The input was empty.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    /// Too few observations for the requested estimator.
    #[error("{what} needs at least {needed} observations, got {got}")]
    TooFewObservations {
        /// Estimator name.
        what: &'static str,
        /// Minimum count.
        needed: usize,
        /// Observed count.
        got: usize,
    },
    /// The log-likelihood evaluated to NaN or infinity.
    #[error("non-finite log-likelihood")]
    NonFiniteLikelihood,
    /// A change-point set violates its invariants.
    #[error("invalid change points: {0}")]
    InvalidChangePoints(String),
    /// A model's stages do not match its change points.
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// Every candidate was degenerate or had empty stages.
    #[error("no valid candidate model")]
    NoValidCandidate,
    /// Both samples have zero variance.
    #[error("both samples have zero variance")]
    ZeroVariance,
}

/// Shorthand result type.
pub type Result<T> = core::result::Result<T, Error>;
