use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain where the model equations are defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("no endemic equilibrium: R1 = {r1} <= 1")]
    NoEndemicEquilibrium { r1: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate cost weights: {0}")]
    DegenerateWeights(String),

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("scenario `{scenario}`: {source}")]
    InScenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        if let Error::InScenario { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Config { .. }
                | Error::Scenario(_)
                | Error::DegenerateWeights(_)
        )
    }
}
