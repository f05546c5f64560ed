use thiserror::Error;

/// Errors raised by the tracking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model error: {0}")]
    Model(String),

    /// Sensor indices are 1-based; `n + 1` names the virtual exit sensor.
    #[error("observation is impossible under the model (sensor {sensor})")]
    Inconsistent { sensor: usize },

    #[error("estimator undefined: belief has no in-network mass")]
    EstimatorUndefined,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("episode ran for {0} steps without the object leaving the network")]
    RunawayEpisode(u64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
