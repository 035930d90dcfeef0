use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("refinement error: {0}")]
    Refinement(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("empty support: {0}")]
    EmptySupport(String),
    #[error("insufficient sample: {0}")]
    InsufficientSample(String),
    #[error("parse error at `{key}`: {message}")]
    Parse { key: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
