//! Command implementations behind the `regstc` binary.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod suites;

use thiserror::Error;

pub use artifact::SynthesisArtifact;
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => 2,
            Self::Synthesis(_) => 3,
            Self::Verification(_) => 4,
            Self::Coverage(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}
