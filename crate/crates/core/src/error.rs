use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The config document could not be parsed. The message carries the
    /// line/column reported by the TOML parser.
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite state encountered at t = {time}")]
    NonFinite { time: f64 },

    #[error(
        "static state search did not converge after {iterations} iterations (gradient residual {residual:e})"
    )]
    StaticPair { iterations: usize, residual: f64 },

    #[error("sampled {what} = {sampled:e} exceeds closed form {closed:e}")]
    ConstantCheck {
        what: &'static str,
        sampled: f64,
        closed: f64,
    },

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("assignment of size {size} exceeds the cap of {cap} atoms")]
    AssignmentTooLarge { size: usize, cap: usize },

    #[error("convergence study: {0}")]
    Study(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that come out of the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::StaticPair { .. }
                | Error::ConstantCheck { .. }
                | Error::Solver(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
