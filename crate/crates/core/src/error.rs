//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Failures raised by channel generation, estimation, rate evaluation and design.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar argument lies outside its documented domain.
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// An argument has the wrong shape or length, or is otherwise malformed.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An operation was invoked in a state that does not satisfy its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A constellation file or table could not be parsed.
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_nonneg(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "finite and >= 0",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "finite and > 0",
        })
    }
}
