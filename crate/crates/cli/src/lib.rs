//! Command-line orchestration for the lungnet pipeline.

pub mod args;
pub mod commands;
pub mod config;
pub mod run;

pub use config::PipelineConfig;

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or missing inputs: exit 2.
    Usage(String),
    /// Anything that fails while doing the work: exit 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<lungnet_core::Error> for CliError {
    fn from(e: lungnet_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}
