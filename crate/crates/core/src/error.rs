// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced anywhere in the training engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("instability: {0}")]
    Instability(String),

    #[error("value ({t}, {x}) outside the solution grid")]
    OutOfRange { t: f64, x: f64 },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
