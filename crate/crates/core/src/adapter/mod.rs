//! Episode-oriented environment over a coupling session: options, solver
//! process orchestration, problem-specific hooks and lock-step
//! vectorization.

mod hooks;
mod instance;
mod options;
mod process;
mod space;
mod vec_env;

pub use hooks::{EnvHooks, FieldBuffers};
pub use instance::{Engine, EnvInstance, InProcessSolvers, Phase, WindowRecord};
pub use options::{parse_options, parse_options_in, EnvOptions, DEFAULT_INSTANCE_ROOT, DEFAULT_SCHEMA_FILE};
pub use process::{copy_tree, log_tail, ProcessConfig, SolverProcess, STDERR_TAIL};
pub use space::{BoxSpace, StepResult, VectorEnv};
pub use vec_env::VecEnv;

use crate::coupling::CouplingError;

/// Environment variables handed to solver scripts.
pub mod env_vars {
    pub const ENDPOINT: &str = crate::transport::ENDPOINT_ENV;
    pub const SCHEMA: &str = "FLOWBRIDGE_SCHEMA";
    pub const PARTICIPANT: &str = "FLOWBRIDGE_PARTICIPANT";
    pub const EPISODE: &str = "FLOWBRIDGE_EPISODE";
    pub const SEED: &str = "FLOWBRIDGE_SEED";
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid options: {0}")]
    Options(String),
    #[error("{op} not allowed in phase {phase:?}")]
    State { op: &'static str, phase: Phase },
    #[error("hook error: {0}")]
    Hook(String),
    #[error("invalid action: {0}")]
    Action(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("cannot start {script} for {solver}: {source}")]
    Spawn { solver: String, script: String, source: std::io::Error },
    #[error("{script} for {solver} failed ({status}); stderr tail:\n{stderr}")]
    Script { solver: String, script: String, status: String, stderr: String },
    #[error("solver {solver} exited early ({status}); stderr tail:\n{stderr}")]
    ChildDied { solver: String, status: String, stderr: String },
    #[error("coupling failed: {source}{children}")]
    Coupling { source: CouplingError, children: String },
    #[error("environment {idx}: {source}")]
    Instance { idx: usize, source: Box<EnvError> },
}

impl From<CouplingError> for EnvError {
    fn from(source: CouplingError) -> Self {
        EnvError::Coupling { source, children: String::new() }
    }
}
