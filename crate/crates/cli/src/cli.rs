//! Command-line grammar.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use flowbridge_core::scenarios::ScenarioKind;

fn scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|_| {
        let all: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.as_str()).collect();
        format!("expected one of {}", all.join(", "))
    })
}

#[derive(Debug, Parser)]
#[command(name = "flowbridge", version = crate::VERSION, about = "Couple a PPO controller to flow solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory receiving one sub-directory per run.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Run solvers on threads instead of as child processes.
    #[arg(long, global = true)]
    pub in_process: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one unactuated episode.
    Baseline {
        #[arg(value_parser = scenario)]
        scenario: ScenarioKind,
        /// Environment JSON of an existing case (defaults to a fresh one).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a PPO policy.
    Train {
        #[arg(value_parser = scenario)]
        scenario: ScenarioKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        envs: usize,
        #[arg(long, default_value_t = 150)]
        episodes: usize,
    },
    /// Run a trained policy deterministically.
    Evaluate {
        #[arg(value_parser = scenario)]
        scenario: ScenarioKind,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Episode length in seconds (defaults to the scenario's).
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Drive the flap with a sinusoidal jet and with a frozen jet.
    FlapDemo {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sinusoid amplitude in m (defaults to the scenario's).
        #[arg(long)]
        amplitude: Option<f64>,
        /// Sinusoid frequency in Hz (defaults to the scenario's).
        #[arg(long)]
        frequency: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a runnable case directory for a scenario.
    Scaffold {
        #[arg(value_parser = scenario)]
        scenario: ScenarioKind,
        #[arg(long)]
        dir: PathBuf,
    },
}
