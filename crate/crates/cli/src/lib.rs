//! Config-driven runner for the allocation dynamics.

pub mod config;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid experiment: {0}")]
    Validation(String),
    #[error("dynamics diverged at t = {time:.4} (state magnitude {magnitude:.3e})")]
    Diverged { time: f64, magnitude: f64 },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Diverged { .. } => 4,
            CliError::Verification(_) | CliError::Io { .. } | CliError::Other(_) => 1,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}
