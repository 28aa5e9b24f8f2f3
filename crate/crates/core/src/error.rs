// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("vector is not in the probability simplex (sum = {sum}, min = {min})")]
    NotInSimplex { sum: f64, min: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("improper function: {0}")]
    Improper(String),

    #[error("missing gradient: {0}")]
    MissingGradient(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible at resolution: {0}")]
    Infeasible(String),

    #[error("objective unbounded below (value {0:e})")]
    Unbounded(f64),

    #[error("grid too large: {points} evaluations exceed the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("unknown instance `{0}`")]
    UnknownInstance(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                found,
            })
        }
    }
}
