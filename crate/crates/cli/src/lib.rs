//! Experiment orchestration for the `coexist` binary.

use std::path::Path;

use coexist_core::error::{ConfigError, PhyError};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("saturation: {0}")]
    Saturation(String),
    #[error("{0}")]
    Io(String),
    #[error("phy error: {0}")]
    Phy(#[from] PhyError),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Saturation(_) => 3,
            CliError::Io(_) | CliError::Phy(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}
