use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("window too short: series has {len} samples, need more than {needed}")]
    WindowTooShort { len: usize, needed: usize },

    #[error("no packets delivered in the measurement window")]
    NoDeliveries,

    #[error("invalid bracket: {0}")]
    InvalidBracket(String),

    #[error("initial infected fraction {rho0} seeds fewer than one of {n} agents")]
    EmptySeed { rho0: f64, n: usize },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
