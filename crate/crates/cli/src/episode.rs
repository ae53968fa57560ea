//! Single-environment episodes and their time-series export.

use std::path::Path;
use std::sync::Arc;

use flowbridge_core::adapter::{Engine, EnvInstance, EnvOptions, ProcessConfig, WindowRecord};
use flowbridge_core::coupling::FieldKey;
use flowbridge_core::scenarios::{ScenarioConfig, ScenarioSolvers};
use flowbridge_core::surrogate::names;

use crate::{runtime, CliError};

pub const TIMESERIES_FILE: &str = "timeseries.csv";

/// Solver processes found next to the running executable, or threads.
pub fn engine(in_process: bool, scenario: &ScenarioConfig) -> Engine {
    if in_process {
        return Engine::InProcess(Arc::new(ScenarioSolvers(scenario.clone())));
    }
    let mut cfg = ProcessConfig::default();
    if let Some(dir) = std::env::current_exe().ok().and_then(|p| p.parent().map(Path::to_path_buf)) {
        cfg.path_prepend.push(dir);
    }
    Engine::Processes(cfg)
}

pub fn single_env(options: &EnvOptions, scenario: &ScenarioConfig, engine: Engine) -> Result<EnvInstance, CliError> {
    EnvInstance::new(0, options.clone(), scenario.hooks(), engine).map_err(crate::usage)
}

pub struct EpisodeOutcome {
    pub trace: Vec<WindowRecord>,
    /// Reward of every control step.
    pub rewards: Vec<f64>,
    pub substeps: usize,
}

impl EpisodeOutcome {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Runs one recorded episode; `policy(step, t, obs)` picks each action.
pub fn run_episode(
    env: &mut EnvInstance,
    seed: u64,
    mut policy: impl FnMut(usize, f64, &[f64]) -> Result<Vec<f64>, CliError>,
) -> Result<EpisodeOutcome, CliError> {
    env.set_recording(true);
    let (mut obs, _) = env.reset(Some(seed)).map_err(runtime)?;
    let mut rewards = Vec::new();
    loop {
        let action = policy(rewards.len(), env.time(), &obs)?;
        let r = env.step(&action).map_err(runtime)?;
        rewards.push(r.reward);
        obs = r.observation;
        if r.terminated {
            break;
        }
    }
    let out = EpisodeOutcome { trace: env.take_trace(), rewards, substeps: env.substeps_per_action() };
    env.close();
    Ok(out)
}

fn value(rec: &WindowRecord, field: &str, mesh: &str, i: usize) -> Result<f64, CliError> {
    rec.reads
        .get(&FieldKey::new(field, mesh))
        .and_then(|v| v.get(i).copied())
        .ok_or_else(|| runtime(format!("window at t={} has no {field}@{mesh}", rec.t)))
}

/// One row per coupling window: `t,action,cd,cl` for the cylinders and
/// `t,y_c,x_tip` for the flap, plus the reward of the enclosing control
/// step when `with_reward` is set.
pub fn timeseries_rows(
    scenario: &ScenarioConfig,
    outcome: &EpisodeOutcome,
    with_reward: bool,
) -> Result<(Vec<&'static str>, Vec<Vec<f64>>), CliError> {
    let flap = matches!(scenario, ScenarioConfig::PerpendicularFlap(_));
    let mut header = if flap { vec!["t", "y_c", "x_tip"] } else { vec!["t", "action", "cd", "cl"] };
    if with_reward {
        header.push("reward");
    }
    let mut rows = Vec::with_capacity(outcome.trace.len());
    for (i, rec) in outcome.trace.iter().enumerate() {
        let mut row = vec![rec.t, rec.action[0]];
        if flap {
            row.push(value(rec, names::TIP_DISPLACEMENT, names::TIP_MESH, 0)?);
        } else {
            row.push(value(rec, names::FORCES, names::FORCES_MESH, 0)?);
            row.push(value(rec, names::FORCES, names::FORCES_MESH, 1)?);
        }
        if with_reward {
            row.push(outcome.rewards[i / outcome.substeps]);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let err = |e: csv::Error| runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    w.flush().map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Mean drag over the final quarter of the rows (column `cd`).
pub fn final_quarter_mean(rows: &[Vec<f64>], col: usize) -> f64 {
    let start = rows.len() - rows.len() / 4;
    let tail = &rows[start..];
    tail.iter().map(|r| r[col]).sum::<f64>() / tail.len() as f64
}
