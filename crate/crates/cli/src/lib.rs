// SPDX-License-Identifier: Apache-2.0

//! Library half of the `dmis` command-line tool.

pub mod commands;
pub mod config;

use dmis_core::Error;

/// Environment variable naming the root directory for default output paths.
pub const OUT_ENV: &str = "DMIS_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_MISSING: i32 = 4;

/// A command failure and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn missing(what: impl Into<String>) -> Self {
        Failure { code: EXIT_MISSING, message: what.into() }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Config(_) => EXIT_CONFIG,
            Error::Io(_) | Error::Format(_) => EXIT_MISSING,
            _ => EXIT_NUMERICAL,
        };
        Failure { code, message: err.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Error::from(err).into()
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;
