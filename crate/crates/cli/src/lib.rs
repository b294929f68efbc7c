//! Experiment runner for the space-time least-squares solvers.

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;

use thiserror::Error;

/// Process exit codes.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    /// Command-line usage error (reported by the argument parser).
    pub const USAGE: i32 = 2;
    pub const CONFIG_PARSE: i32 = 3;
    pub const UNKNOWN_EXPERIMENT: i32 = 4;
    pub const INVALID_PARAMETER: i32 = 5;
    pub const NUMERICAL_FAILURE: i32 = 6;
    pub const IO_FAILURE: i32 = 7;
    pub const VERIFICATION_FAILED: i32 = 8;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("unknown experiment or suite `{0}`")]
    UnknownExperiment(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] tdse_core::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} verification check(s) failed")]
    Verification(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => exit_code::CONFIG_PARSE,
            CliError::UnknownExperiment(_) => exit_code::UNKNOWN_EXPERIMENT,
            CliError::InvalidParameter(_) => exit_code::INVALID_PARAMETER,
            CliError::Numerical(_) => exit_code::NUMERICAL_FAILURE,
            CliError::Io(_) => exit_code::IO_FAILURE,
            CliError::Verification(_) => exit_code::VERIFICATION_FAILED,
        }
    }
}
