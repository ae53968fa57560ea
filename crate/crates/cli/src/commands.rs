//! The operator commands.

use std::fs::File;
use std::path::Path;

use flowbridge_core::adapter::VectorEnv;
use flowbridge_core::control::{
    to_env_action, Checkpoint, EpisodeRecord, PpoConfig, SineController, TrainObserver, Trainer, UpdateRecord,
};
use flowbridge_core::scenarios::{make_vec_env, ScenarioConfig, ScenarioKind};

use crate::case::{self, prepare};
use crate::cli::{Cli, Command};
use crate::episode::{
    engine, final_quarter_mean, run_episode, single_env, timeseries_rows, write_csv, EpisodeOutcome, TIMESERIES_FILE,
};
use crate::run_dir::RunDir;
use crate::{runtime, usage, CliError};

pub const EPISODES_FILE: &str = "episodes.csv";
pub const UPDATES_FILE: &str = "updates.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.fbck";
pub const BASELINE_FILE: &str = "baseline.csv";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli.out;
    let ip = cli.in_process;
    match cli.command {
        Command::Baseline { scenario, config, seed } => {
            with_run(&out, "baseline", scenario, seed, ip, |run| baseline(run, scenario, config.as_deref(), seed, ip))
        }
        Command::Train { scenario, config, seed, envs, episodes } => {
            with_run(&out, "train", scenario, seed, ip, |run| {
                train(run, scenario, config.as_deref(), seed, envs, episodes, ip)
            })
        }
        Command::Evaluate { scenario, checkpoint, config, duration, seed } => {
            let ck = Checkpoint::load(&checkpoint).map_err(|e| usage(format!("{}: {e}", checkpoint.display())))?;
            if ck.header.scenario != scenario.as_str() {
                return Err(usage(format!(
                    "checkpoint was trained on '{}', cannot evaluate it on '{scenario}'",
                    ck.header.scenario
                )));
            }
            with_run(&out, "evaluate", scenario, seed, ip, |run| {
                run.manifest.config_paths.push(checkpoint.clone());
                evaluate(run, scenario, &ck, config.as_deref(), duration, seed, ip)
            })
        }
        Command::FlapDemo { config, amplitude, frequency, duration, seed } => {
            let sine = sinusoid(config.as_deref(), amplitude, frequency)?;
            with_run(&out, "flap-demo", ScenarioKind::PerpendicularFlap, seed, ip, |run| {
                flap_demo(run, config.as_deref(), &sine, duration, seed, ip)
            })
        }
        Command::Scaffold { scenario, dir } => {
            let path = case::scaffold_case(&dir, scenario)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn with_run(
    out: &Path,
    command: &str,
    scenario: ScenarioKind,
    seed: u64,
    in_process: bool,
    body: impl FnOnce(&mut RunDir) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let engine = if in_process { "in-process" } else { "processes" };
    let mut run = RunDir::create(out, command, scenario.as_str(), seed, engine)?;
    println!("run directory: {}", run.path.display());
    let res = body(&mut run);
    run.finish(&res)?;
    res
}

fn cylinder_summary(label: &str, scenario: &ScenarioConfig, rows: &[Vec<f64>], outcome: &EpisodeOutcome) {
    let cd_base = scenario.cd_base().unwrap_or(f64::NAN);
    let cd_tail = final_quarter_mean(rows, 2);
    let mean_cd = rows.iter().map(|r| r[2]).sum::<f64>() / rows.len() as f64;
    println!(
        "{label}: {} steps, return {:.6}, mean Cd {:.6}, final-25% mean Cd {:.6} vs Cd_base {:.6} ({:+.3}%)",
        outcome.rewards.len(),
        outcome.total_reward(),
        mean_cd,
        cd_tail,
        cd_base,
        100.0 * (cd_tail - cd_base) / cd_base
    );
}

fn flap_summary(label: &str, rows: &[Vec<f64>]) {
    let tail = &rows[rows.len() / 2..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[2]), hi.max(r[2])));
    println!("{label}: {} windows, x_tip half range over the second half {:.6e} m", rows.len(), 0.5 * (hi - lo));
}

fn baseline(run: &mut RunDir, kind: ScenarioKind, config: Option<&Path>, seed: u64, ip: bool) -> Result<(), CliError> {
    let (options, scenario) = prepare(run, kind, config, None)?;
    let mut env = single_env(&options, &scenario, engine(ip, &scenario))?;
    let action = match &scenario {
        ScenarioConfig::PerpendicularFlap(s) => s.y0,
        _ => 0.0,
    };
    let outcome = run_episode(&mut env, seed, |_, _, _| Ok(vec![action]))?;
    let (header, rows) = timeseries_rows(&scenario, &outcome, false)?;
    write_csv(&run.file(TIMESERIES_FILE), &header, &rows)?;
    match scenario {
        ScenarioConfig::PerpendicularFlap(_) => flap_summary("baseline", &rows),
        _ => cylinder_summary("baseline", &scenario, &rows, &outcome),
    }
    Ok(())
}

struct CsvLog {
    episodes: csv::Writer<File>,
    updates: csv::Writer<File>,
}

fn io_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

impl CsvLog {
    fn create(run: &RunDir) -> Result<CsvLog, CliError> {
        let open = |name: &str, header: &[&str]| -> Result<csv::Writer<File>, CliError> {
            let p = run.file(name);
            let mut w = csv::Writer::from_path(&p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            w.write_record(header).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            Ok(w)
        };
        Ok(CsvLog {
            episodes: open(EPISODES_FILE, &["episode", "env_idx", "return", "length"])?,
            updates: open(UPDATES_FILE, &["update", "loss", "clip_frac", "approx_kl", "entropy"])?,
        })
    }
}

impl TrainObserver for CsvLog {
    fn on_episode(&mut self, r: &EpisodeRecord) -> std::io::Result<()> {
        let row = [r.episode.to_string(), r.env_idx.to_string(), r.ret.to_string(), r.length.to_string()];
        self.episodes.write_record(&row).map_err(io_err)?;
        self.episodes.flush()
    }

    fn on_update(&mut self, r: &UpdateRecord) -> std::io::Result<()> {
        let row = [
            r.update.to_string(),
            r.loss.to_string(),
            r.clip_frac.to_string(),
            r.approx_kl.to_string(),
            r.entropy.to_string(),
        ];
        self.updates.write_record(&row).map_err(io_err)?;
        self.updates.flush()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn train(
    run: &mut RunDir,
    kind: ScenarioKind,
    config: Option<&Path>,
    seed: u64,
    envs: usize,
    episodes: usize,
    ip: bool,
) -> Result<(), CliError> {
    if envs == 0 {
        return Err(usage("--envs must be at least 1"));
    }
    let (options, scenario) = prepare(run, kind, config, None)?;
    let steps = scenario.episode_steps();
    let defaults = PpoConfig::default();
    // keep minibatches equal-sized whatever the number of environments
    let minibatch = gcd(envs * steps, defaults.minibatch);
    let ppo = PpoConfig { seed, n_envs: envs, total_episodes: episodes, minibatch, ..defaults };
    ppo.validate(steps).map_err(usage)?;

    let mut venv = make_vec_env(&options, &scenario, envs, engine(ip, &scenario)).map_err(usage)?;
    let space = venv.action_space().clone();
    let mut trainer = Trainer::new(ppo, venv.observation_space().shape(), space.shape());
    let mut log = CsvLog::create(run)?;
    let res = trainer.train(&mut venv, steps, &mut log).map(|_| ()).map_err(runtime);
    venv.close();
    res?;

    let ck = trainer.checkpoint(kind.as_str(), &space);
    ck.save(&run.file(CHECKPOINT_FILE)).map_err(runtime)?;
    let returns: Vec<f64> = trainer.log.episodes.iter().map(|e| e.ret).collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    let k = returns.len().min(10);
    println!(
        "trained {} episodes in {} updates; mean return first {k}: {:.6}, last {k}: {:.6}",
        returns.len(),
        trainer.log.updates.len(),
        mean(&returns[..k]),
        mean(&returns[returns.len() - k..])
    );
    Ok(())
}

fn evaluate(
    run: &mut RunDir,
    kind: ScenarioKind,
    ck: &Checkpoint,
    config: Option<&Path>,
    duration: Option<f64>,
    seed: u64,
    ip: bool,
) -> Result<(), CliError> {
    let (options, scenario) = prepare(run, kind, config, duration)?;
    let mut env = single_env(&options, &scenario, engine(ip, &scenario))?;
    let policy = ck.policy().map_err(usage)?;
    let space = env.action_space().clone();
    if policy.shape.obs_dim != env.observation_space().shape() || policy.shape.act_dim != space.shape() {
        return Err(usage("checkpoint policy shape does not match the environment"));
    }
    if ck.header.action_low != space.low || ck.header.action_high != space.high {
        return Err(usage("checkpoint action bounds differ from the environment's"));
    }
    let outcome = run_episode(&mut env, seed, |_, _, obs| {
        let (mean, _) = policy.policy_forward(obs).map_err(runtime)?;
        Ok(to_env_action(&mean, &space))
    })?;
    let (header, rows) = timeseries_rows(&scenario, &outcome, true)?;
    write_csv(&run.file(TIMESERIES_FILE), &header, &rows)?;
    match scenario {
        ScenarioConfig::PerpendicularFlap(_) => flap_summary("evaluation", &rows),
        _ => cylinder_summary("evaluation", &scenario, &rows, &outcome),
    }
    Ok(())
}

fn sinusoid(config: Option<&Path>, amplitude: Option<f64>, frequency: Option<f64>) -> Result<SineController, CliError> {
    let defaults = match config {
        Some(p) => flowbridge_core::scenarios::Case::load(p).map_err(usage)?.1,
        None => ScenarioConfig::default_for(ScenarioKind::PerpendicularFlap),
    };
    let ScenarioConfig::PerpendicularFlap(flap) = &defaults else {
        return Err(usage("flap-demo needs a perpendicular-flap case"));
    };
    SineController::new(
        flap.y0,
        amplitude.unwrap_or(flap.amplitude),
        frequency.unwrap_or(flap.frequency),
        flap.y_bounds[0],
        flap.y_bounds[1],
    )
    .map_err(usage)
}

fn flap_demo(
    run: &mut RunDir,
    config: Option<&Path>,
    sine: &SineController,
    duration: Option<f64>,
    seed: u64,
    ip: bool,
) -> Result<(), CliError> {
    let (options, scenario) = prepare(run, ScenarioKind::PerpendicularFlap, config, duration)?;
    let eng = engine(ip, &scenario);

    let mut env = single_env(&options, &scenario, eng.clone())?;
    let controlled = run_episode(&mut env, seed, |_, t, _| Ok(vec![sine.action(t)]))?;
    let (header, rows) = timeseries_rows(&scenario, &controlled, false)?;
    write_csv(&run.file(TIMESERIES_FILE), &header, &rows)?;
    flap_summary("sinusoidal jet", &rows);

    let mut env = single_env(&options, &scenario, eng)?;
    let frozen = run_episode(&mut env, seed, |_, _, _| Ok(vec![sine.y0]))?;
    let (header, rows) = timeseries_rows(&scenario, &frozen, false)?;
    write_csv(&run.file(BASELINE_FILE), &header, &rows)?;
    flap_summary("frozen jet", &rows);
    Ok(())
}
