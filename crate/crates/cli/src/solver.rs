//! Shared entry point of the solver executables.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use flowbridge_core::adapter::env_vars;
use flowbridge_core::coupling::{CouplingSchema, CouplingSession};
use flowbridge_core::scenarios::ScenarioConfig;
use flowbridge_core::surrogate::{names, run_channel_fluid, run_flap_solid, run_wake, ParticipantExit};
use flowbridge_core::transport::{Endpoint, DEFAULT_RETRY_BUDGET};
use log::{error, info};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Wake,
    Fluid,
    Solid,
}

impl SolverKind {
    pub fn default_participant(self) -> &'static str {
        match self {
            SolverKind::Wake => names::WAKE_FLUID,
            SolverKind::Fluid => names::CHANNEL_FLUID,
            SolverKind::Solid => names::FLAP_SOLID,
        }
    }
}

#[derive(Debug, Parser)]
#[command(version = env!("FLOWBRIDGE_VERSION"), about = "Surrogate solver participant")]
struct SolverArgs {
    /// Rendezvous endpoint (tcp:127.0.0.1:<port> or local:<path>).
    #[arg(long, env = env_vars::ENDPOINT)]
    endpoint: String,
    /// Coupling schema JSON.
    #[arg(long, env = env_vars::SCHEMA)]
    schema: PathBuf,
    /// Scenario JSON holding the solver parameters.
    #[arg(long, default_value = "params.json")]
    params: PathBuf,
    /// Participant name in the schema.
    #[arg(long, env = env_vars::PARTICIPANT)]
    participant: Option<String>,
}

fn run(kind: SolverKind, args: SolverArgs) -> Result<ParticipantExit, String> {
    let endpoint: Endpoint = args.endpoint.parse().map_err(|e| format!("{e}"))?;
    let schema = CouplingSchema::from_path(&args.schema).map_err(|e| e.to_string())?;
    let config = ScenarioConfig::from_path(&args.params).map_err(|e| e.to_string())?;
    let participant = args.participant.unwrap_or_else(|| kind.default_participant().to_owned());
    let mut session = CouplingSession::new(Arc::new(schema), &participant).map_err(|e| e.to_string())?;
    session.connect_links(&endpoint, DEFAULT_RETRY_BUDGET).map_err(|e| e.to_string())?;
    info!("{participant}: connected through {endpoint}");
    let res = match kind {
        SolverKind::Wake => {
            let setup = config.wake_setup().ok_or("params describe no wake solver")?;
            run_wake(&mut session, &setup)
        }
        SolverKind::Fluid => {
            let p = config.channel_params().ok_or("params describe no channel solver")?;
            run_channel_fluid(&mut session, p)
        }
        SolverKind::Solid => {
            let p = config.channel_params().ok_or("params describe no flap solver")?;
            run_flap_solid(&mut session, p)
        }
    };
    res.map_err(|e| e.to_string())
}

/// Parses the command line, runs one episode and returns the exit code.
pub fn main(kind: SolverKind) -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = SolverArgs::parse();
    match run(kind, args) {
        Ok(exit) => {
            info!("{}: finished ({exit:?})", kind.default_participant());
            0
        }
        Err(e) => {
            error!("ERROR {e}");
            1
        }
    }
}
