use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument outside the documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure on {rows}x{cols} matrix: {reason}")]
    Numerical {
        rows: usize,
        cols: usize,
        reason: String,
    },

    /// Spectrum is not normalized to `Σσ_j² = n·d`.
    #[error("spectrum not scaled: gamma(d∧n) = {actual}, expected {expected}")]
    Scaling { actual: f64, expected: f64 },

    #[error("parse error at line {line}{}: {reason}", col.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        col: Option<usize>,
        reason: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
