use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the crate.
///
/// Variants split into two families: validation errors (bad inputs, bad
/// configuration) and numerical failures (divergent integrals, stalled
/// solvers, singular matrices). The CLI maps them to distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("spectrum-divergent-at-zero: undamped spectrum is infinite at omega = 0")]
    SpectrumDivergentAtZero,

    #[error("chain-requires-even-p: integrator chain needs an even integer exponent, got p = {0}")]
    ChainRequiresEvenP(f64),

    #[error("requires-even-p: linear-Gaussian system needs an even integer exponent, got p = {0}")]
    RequiresEvenP(f64),

    #[error("exponent-out-of-range: power-law exponent must exceed 1, got p = {0}")]
    ExponentOutOfRange(f64),

    #[error("bound-divergent: {0}")]
    BoundDivergent(String),

    #[error(
        "estimator-mse-divergent: linearized ABC error diverges without a low-frequency cutoff"
    )]
    EstimatorMseDivergent,

    #[error("conditioning-limit: eigenvector construction is limited to p <= 20, got p = {0}")]
    ConditioningLimit(u32),

    #[error("riccati-ode-stalled: no stationary point after {steps} steps")]
    RiccatiOdeStalled { steps: usize },

    #[error("smoother-singular: inverse-sum combination of covariances is singular")]
    SmootherSingular,

    #[error("non-stationary: {0}")]
    NonStationary(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ChainRequiresEvenP(_)
                | Error::RequiresEvenP(_)
                | Error::ExponentOutOfRange(_)
                | Error::ConditioningLimit(_)
                | Error::DimensionMismatch { .. }
                | Error::EmptyWindow(_)
                | Error::InvalidParameter { .. }
                | Error::Config(_)
                | Error::Io(_)
                | Error::SpectrumDivergentAtZero
                | Error::NonStationary(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

pub(crate) fn ensure_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be finite and >= 0, got {value}"),
        ))
    }
}
