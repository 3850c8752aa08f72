//! Experiment driver: one subcommand per module, TOML configs, hashed JSON and CSV reports.

pub mod commands;
pub mod config;
pub mod output;

use std::process::ExitCode;

pub use commands::{run, Subcommand};
pub use config::ExperimentConfig;
pub use output::{Check, Outcome, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("numerical failure: {0}")]
    Numerical(kslab::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl From<kslab::Error> for CliError {
    fn from(e: kslab::Error) -> Self {
        use kslab::Error as E;
        match e {
            e if e.is_numerical() => CliError::Numerical(e),
            E::InvalidGrid(_) | E::InvalidParameter(_) | E::OutsideGrid(_) | E::Parse(_) => CliError::Config(e.to_string()),
            E::Io(io) => CliError::Io(io),
            e => CliError::Check(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

pub const EXIT_PASS: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_INVALID_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Check(_) => EXIT_CHECK_FAILED,
            CliError::Config(_) | CliError::Io(_) => EXIT_INVALID_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        })
    }
}
