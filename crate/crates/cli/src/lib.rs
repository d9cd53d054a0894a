//! Configuration-driven runner for the stylized-facts pipeline.
//!
//! The binary is a thin wrapper; everything it does is reachable from here so
//! integration tests can drive the pipeline without spawning processes.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod synth_cmd;

use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("analysis failure: {0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Analysis(_) => 3,
        }
    }
}
