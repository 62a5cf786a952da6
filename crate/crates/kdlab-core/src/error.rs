use thiserror::Error;

/// Errors produced by model construction, configuration and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate velocity model: {0}")]
    DegenerateModel(String),
    #[error("covariance assembly failed: {0}")]
    Covariance(String),
    #[error("unsupported functional: {0}")]
    UnsupportedFunctional(String),
    #[error("trajectory diverged: {0}")]
    Diverged(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
