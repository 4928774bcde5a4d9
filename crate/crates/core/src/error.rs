use thiserror::Error;

/// Errors raised by the numerical stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("density not normalized: mass defect {defect:.3e}")]
    NotNormalized { defect: f64 },

    #[error("domain too small: boundary amplitude {amplitude:.3e} at time node {node}")]
    DomainTooSmall { amplitude: f64, node: usize },

    #[error("solver instability: norm drift {drift:.3e} at time node {node}")]
    Instability { drift: f64, node: usize },

    #[error("{escaped} of {total} paths left the spatial domain")]
    TooManyEscapes { escaped: usize, total: usize },

    #[error("low statistics: {0}")]
    LowStatistics(String),

    #[error("degenerate chain: zero marginal probability for state {state} at step {step}")]
    DegenerateChain { step: usize, state: usize },

    #[error("unknown equation id `{0}`")]
    UnknownEquation(String),

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config { key: String, line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
