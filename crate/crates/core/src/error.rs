use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// An integrator or exponential step failed its accuracy check.
    #[error("numerical tolerance exceeded in {context}: {detail}")]
    NumericalTolerance { context: String, detail: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("no stable synchronization configuration for N = {0}")]
    NoSyncConfig(usize),

    #[error("missing channel `{0}`")]
    MissingChannel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub(crate) fn invalid_config(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
