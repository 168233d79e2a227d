use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("scenario is invalid ({} violation(s)); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidScenario(Vec<Violation>),

    #[error("power problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("scenario generation failed: {0}")]
    Generation(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{field} out of range: {value} ({expected})")]
    Range {
        field: String,
        value: f64,
        expected: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
