use thiserror::Error;

use crate::equilibrium::EquilibriumSolution;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {key}: {msg}")]
    Config { key: String, msg: String },

    #[error("validation error: constraint `{0}` violated")]
    Validation(String),

    #[error("equilibrium did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        last: Box<EquilibriumSolution>,
    },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: exponent {exponent:e} overflows exp()")]
    Range { exponent: f64 },

    #[error("unknown figure `{id}`; valid ids: {valid}")]
    UnknownFigure { id: String, valid: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Validation(_) | Error::UnknownFigure { .. } => 2,
            Error::Convergence { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
