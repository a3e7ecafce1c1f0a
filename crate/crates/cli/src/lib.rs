//! Command-line frontend for the `rls` binary.
//!
//! The binary is a thin wrapper around [`run`]; everything here is public so
//! the integration tests can drive commands without spawning processes.

pub mod args;
pub mod commands;
pub mod config;
pub mod presets;

use std::process::ExitCode;

pub use args::{Cli, Command};
pub use commands::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o: {0}")]
    Io(String),

    /// The recovered support differs from the stored one.
    #[error("recovered support does not match")]
    Mismatch,

    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Mismatch => 3,
            CliError::Failure(_) => 1,
        })
    }
}

impl From<rls_core::Error> for CliError {
    fn from(e: rls_core::Error) -> Self {
        match e {
            rls_core::Error::Io(_) | rls_core::Error::Parse { .. } => CliError::Io(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
