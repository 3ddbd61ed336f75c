use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("simulation failure: {invalid} of {total} paths left the positive half-line")]
    SimulationFailure { invalid: usize, total: usize },

    #[error("grid too coarse for the explicit scheme: need at least {min_time_steps} time steps (got {time_steps})")]
    GridTooCoarse { time_steps: usize, min_time_steps: usize },

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("generator ordering violated at t={t}, y={y}, z={z}: low={low} > high={high}")]
    PreconditionViolation {
        t: f64,
        y: f64,
        z: f64,
        low: f64,
        high: f64,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
