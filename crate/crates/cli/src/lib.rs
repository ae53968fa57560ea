//! Operator commands (baseline, train, evaluate, flap demo, scaffold) and
//! the solver executables' entry point.

pub mod case;
pub mod cli;
pub mod commands;
pub mod episode;
pub mod run_dir;
pub mod solver;

pub const VERSION: &str = env!("FLOWBRIDGE_VERSION");

/// Command failure, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Anything that went wrong while running (exit 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}
