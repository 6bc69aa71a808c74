use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("numeric instability at step {step} (t = {t} s): {what}")]
    NumericInstability { step: usize, t: f64, what: String },

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { iterations: usize, what: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Validation failures (bad input) as opposed to runtime numeric trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Domain(_)
                | Error::InsufficientData(_)
                | Error::DegenerateRegression(_)
                | Error::Config(_)
                | Error::UnknownKeys(_)
                | Error::Parse(_)
        )
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericInstability { .. } | Error::NoConvergence { .. }
        )
    }
}

pub(crate) fn ensure_finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be finite, got {v}")))
    }
}
