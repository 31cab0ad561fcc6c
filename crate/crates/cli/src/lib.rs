//! Experiment driver: JSON configs, the four experiments, CSV output.

pub mod config;
pub mod init;
pub mod output;
pub mod run;
pub mod table;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(#[from] bscahn_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 for bad configs, 3 for everything that fails afterwards.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Solver(_) | Self::Io { .. } => 3,
        }
    }
}
