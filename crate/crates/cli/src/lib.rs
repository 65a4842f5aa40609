//! Command-line front end: loads a TOML experiment suite, runs one of the
//! subcommands and writes a JSON report plus CSV plot data.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod report;

pub use args::{Cli, Command};
pub use commands::{execute, RunOptions, RunSummary};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const ASSERTION_FAILED: u8 = 1;
    pub const CONFIG_ERROR: u8 = 2;
    pub const RUNTIME_ERROR: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Data(String),
    #[error("{0}")]
    Core(#[from] robcert::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use robcert::Error as E;
        match self {
            CliError::Config(_) | CliError::Data(_) => exit::CONFIG_ERROR,
            CliError::Io(_) => exit::RUNTIME_ERROR,
            CliError::Core(e) => match e {
                E::Numerical(_)
                | E::EstimatorUnavailable(_)
                | E::DegenerateClassifier(_)
                | E::CoverViolation(_) => exit::RUNTIME_ERROR,
                _ => exit::CONFIG_ERROR,
            },
        }
    }
}
