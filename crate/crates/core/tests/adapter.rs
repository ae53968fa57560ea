//! Environment lifecycle over in-process and script-driven solvers.

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use flowbridge_core::adapter::{
    BoxSpace, Engine, EnvError, EnvHooks, EnvInstance, EnvOptions, FieldBuffers, InProcessSolvers, Phase,
    ProcessConfig, VecEnv, VectorEnv,
};
use flowbridge_core::coupling::{CouplingMesh, CouplingSchema, CouplingSession, FieldKey, FieldSpec};

const SOLVER: &str = "echo";

fn schema(window_size: f64, end_time: f64) -> CouplingSchema {
    CouplingSchema {
        participants: vec!["controller".into(), SOLVER.into()],
        links: vec![["controller".into(), SOLVER.into()]],
        meshes: vec![CouplingMesh {
            name: "m".into(),
            dim: 2,
            owner: SOLVER.into(),
            vertices: vec![vec![0.0, 0.0]],
            face_weights: vec![1.0],
        }],
        fields: vec![
            FieldSpec {
                name: "Action".into(),
                mesh: "m".into(),
                components: 1,
                writer: "controller".into(),
                reader: None,
            },
            FieldSpec { name: "State".into(), mesh: "m".into(), components: 1, writer: SOLVER.into(), reader: None },
        ],
        window_size,
        end_time,
    }
}

/// Writes the schema and one solver directory with the given scripts.
fn case(dir: &Path, window_size: f64, end_time: f64, reset: &str, run: &str) -> EnvOptions {
    fs::write(dir.join("coupling-schema.json"), schema(window_size, end_time).to_json_pretty()).unwrap();
    let s = dir.join(SOLVER);
    fs::create_dir_all(&s).unwrap();
    for (name, body) in [("reset.sh", reset), ("run.sh", run)] {
        let p = s.join(name);
        fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
        fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
    }
    EnvOptions {
        environment_name: "echo".into(),
        solvers: vec![SOLVER.into()],
        reset_script: "reset.sh".into(),
        run_script: "run.sh".into(),
        read_from: [("State".to_string(), "m".to_string())].into(),
        write_to: [("m".to_string(), "Action".to_string())].into(),
        schema_path: dir.join("coupling-schema.json"),
        instance_root: dir.join("instances"),
        base_dir: dir.to_path_buf(),
    }
}

/// Copies the action into `Action`; observes `State`, rewards its value.
#[derive(Clone)]
struct Identity {
    k: usize,
    skip_write: bool,
    obs_len: usize,
}

impl Identity {
    fn new(k: usize) -> Self {
        Identity { k, skip_write: false, obs_len: 1 }
    }
}

impl EnvHooks for Identity {
    fn action_space(&self) -> BoxSpace {
        BoxSpace::new(vec![-10.0], vec![10.0]).unwrap()
    }
    fn observation_space(&self) -> BoxSpace {
        BoxSpace::unbounded(1)
    }
    fn substeps_per_action(&self) -> usize {
        self.k
    }
    fn get_action(&mut self, action: &[f64], specs: &[FieldSpec]) -> Result<FieldBuffers, EnvError> {
        if self.skip_write {
            return Ok(FieldBuffers::new());
        }
        Ok(specs.iter().map(|s| (s.key(), action.to_vec())).collect())
    }
    fn get_observation(&mut self, read: &FieldBuffers, _: &[FieldSpec], _: f64) -> Result<Vec<f64>, EnvError> {
        let v = read[&FieldKey::new("State", "m")][0];
        Ok(vec![v; self.obs_len])
    }
    fn get_reward(&mut self, reads: &[FieldBuffers], _: f64) -> Result<f64, EnvError> {
        Ok(reads.last().unwrap()[&FieldKey::new("State", "m")][0])
    }
}

/// Echoes `Action` back as `State`, optionally failing at a given window.
struct Echo {
    fail_at: Option<u64>,
}

impl InProcessSolvers for Echo {
    fn run(&self, _: &str, s: &mut CouplingSession) -> Result<(), String> {
        let ws = s.initialize().map_err(|e| e.to_string())?;
        while s.is_coupling_ongoing().map_err(|e| e.to_string())? {
            if Some(s.window_index()) == self.fail_at {
                s.abort("echo gave up");
                return Err("echo gave up".into());
            }
            let a = s.read_field("Action", "m").map_err(|e| e.to_string())?.to_vec();
            s.write_field("State", "m", &a).map_err(|e| e.to_string())?;
            s.advance(ws).map_err(|e| e.to_string())?;
        }
        s.finalize();
        Ok(())
    }
}

fn in_process(fail_at: Option<u64>) -> Engine {
    Engine::InProcess(Arc::new(Echo { fail_at }))
}

fn quick_processes() -> Engine {
    Engine::Processes(ProcessConfig {
        timeout: Duration::from_secs(2),
        kill_grace: Duration::from_secs(1),
        exit_grace: Duration::from_millis(200),
        ..ProcessConfig::default()
    })
}

fn alive(pid: u32) -> bool {
    // zombies have already exited
    match fs::read_to_string(format!("/proc/{pid}/stat")) {
        Ok(stat) => !stat.rsplit(')').next().unwrap_or("").trim_start().starts_with('Z'),
        Err(_) => false,
    }
}

#[test]
fn reset_returns_initial_observation_and_counts_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 1.0, "exit 0", "exit 0");
    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(1)), in_process(None)).unwrap();
    assert_eq!(env.phase(), Phase::Idle);
    let (obs, info) = env.reset(Some(7)).unwrap();
    assert_eq!(obs, vec![0.0]);
    assert!(info.is_empty());
    assert_eq!(env.episode_counter(), 1);
    env.reset(None).unwrap();
    assert_eq!(env.episode_counter(), 2);
    assert_eq!(env.phase(), Phase::Episode);
}

#[test]
fn identity_hook_round_trips_the_action() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 1.0, "exit 0", "exit 0");
    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(1)), in_process(None)).unwrap();
    env.reset(None).unwrap();
    let r = env.step(&[0.75]).unwrap();
    assert_eq!(r.observation, vec![0.75]);
    assert_eq!(r.reward, 0.75);
    assert!(!r.truncated && r.info.is_empty());
    // clamped to the action space
    assert_eq!(env.step(&[20.0]).unwrap().observation, vec![10.0]);
}

#[test]
fn actions_ramp_linearly_across_windows() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.002, 0.2, "exit 0", "exit 0");
    let mut env = EnvInstance::new(0, opts.clone(), Box::new(Identity::new(50)), in_process(None)).unwrap();
    env.set_recording(true);
    env.reset(None).unwrap();
    env.step(&[1.0]).unwrap();
    env.step(&[-1.0]).unwrap();
    let trace = env.take_trace();
    assert_eq!(trace.len(), 100);
    assert_eq!(trace[24].action, vec![0.5]);
    assert_eq!(trace[49].action, vec![1.0]);
    // continuous across the step boundary
    assert!((trace[50].action[0] - (1.0 - 2.0 / 50.0)).abs() < 1e-15);
    assert_eq!(trace[99].action, vec![-1.0]);
    for w in trace.windows(2) {
        assert!((w[1].t - w[0].t - 0.002).abs() < 1e-12);
    }

    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(1)), in_process(None)).unwrap();
    env.set_recording(true);
    env.reset(None).unwrap();
    env.step(&[0.3]).unwrap();
    assert_eq!(env.take_trace()[0].action, vec![0.3]);
}

#[test]
fn episode_terminates_exactly_at_the_last_step() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.002, 2.0, "exit 0", "exit 0");
    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(50)), in_process(None)).unwrap();
    assert_eq!(env.episode_steps(), 20);
    env.reset(None).unwrap();
    let flags: Vec<bool> = (0..20).map(|_| env.step(&[0.1]).unwrap().terminated).collect();
    assert!(flags[..19].iter().all(|t| !t) && flags[19]);
    assert_eq!(env.phase(), Phase::Idle);
    assert!(matches!(env.step(&[0.1]), Err(EnvError::State { .. })));
}

#[test]
fn close_is_idempotent_and_terminal() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 1.0, "exit 0", "exit 0");
    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(1)), in_process(None)).unwrap();
    env.reset(None).unwrap();
    env.step(&[1.0]).unwrap();
    env.close();
    env.close();
    assert_eq!(env.phase(), Phase::Closed);
    assert!(matches!(env.reset(None), Err(EnvError::State { .. })));
}

#[test]
fn hook_contract_violations_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 1.0, "exit 0", "exit 0");
    let hooks = Identity { skip_write: true, ..Identity::new(1) };
    let mut env = EnvInstance::new(0, opts.clone(), Box::new(hooks), in_process(None)).unwrap();
    env.reset(None).unwrap();
    let err = env.step(&[1.0]).unwrap_err().to_string();
    assert!(err.contains("Action@m"), "{err}");
    assert_eq!(env.phase(), Phase::Idle);

    let hooks = Identity { obs_len: 2, ..Identity::new(1) };
    let mut env = EnvInstance::new(0, opts, Box::new(hooks), in_process(None)).unwrap();
    assert!(env.reset(None).is_err());
}

#[test]
fn options_are_checked_against_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = case(dir.path(), 0.1, 1.0, "exit 0", "exit 0");
    opts.write_to = [("m".to_string(), "State".to_string())].into();
    assert!(EnvInstance::new(0, opts.clone(), Box::new(Identity::new(1)), in_process(None)).is_err());
    opts.write_to = [("m".to_string(), "Action".to_string())].into();
    // 10 windows are not a multiple of 3
    assert!(EnvInstance::new(0, opts.clone(), Box::new(Identity::new(3)), in_process(None)).is_err());
    fs::set_permissions(dir.path().join(SOLVER).join("run.sh"), fs::Permissions::from_mode(0o644)).unwrap();
    assert!(EnvInstance::new(0, opts, Box::new(Identity::new(1)), quick_processes()).is_err());
}

#[test]
fn solver_failure_mid_episode_surfaces_and_idles() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 1.0, "exit 0", "exit 0");
    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(1)), in_process(Some(3))).unwrap();
    env.reset(None).unwrap();
    for _ in 0..3 {
        env.step(&[1.0]).unwrap();
    }
    let err = env.step(&[1.0]).unwrap_err().to_string();
    assert!(err.contains("echo gave up"), "{err}");
    assert_eq!(env.phase(), Phase::Idle);
    // a fresh episode works again
    env.reset(None).unwrap();
}

#[test]
fn failing_reset_script_reports_name_status_and_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 1.0, "echo 'no mesh here' >&2; exit 1", "exit 0");
    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(1)), quick_processes()).unwrap();
    let err = env.reset(None).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, EnvError::Script { .. }), "{msg}");
    assert!(msg.contains("reset.sh") && msg.contains('1') && msg.contains("no mesh here"), "{msg}");
    let log = dir.path().join("instances/env_0").join(SOLVER).join("log/reset-1.stderr");
    assert!(fs::read_to_string(log).unwrap().contains("no mesh here"));
}

#[test]
fn solver_dying_before_handshake_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 1.0, "exit 0", "echo \"endpoint $FLOWBRIDGE_ENDPOINT\" >&2; exit 3");
    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(1)), quick_processes()).unwrap();
    let msg = env.reset(None).unwrap_err().to_string();
    assert!(msg.contains("endpoint tcp:127.0.0.1:"), "{msg}");
    assert!(env.child_pids().is_empty());
}

#[test]
fn hanging_solver_times_out_and_is_killed() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 1.0, "exit 0", "echo $$ > pid; exec sleep 60");
    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(1)), quick_processes()).unwrap();
    let t0 = Instant::now();
    assert!(env.reset(None).is_err());
    assert!(t0.elapsed() < Duration::from_secs(10));
    let pid: u32 = fs::read_to_string(dir.path().join("instances/env_0").join(SOLVER).join("pid"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    while alive(pid) && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(50));
    }
    assert!(!alive(pid), "solver {pid} survived");
}

#[test]
fn vec_env_steps_in_lock_step_and_autoresets() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 0.3, "exit 0", "exit 0");
    let mut venv =
        VecEnv::new(4, |i| EnvInstance::new(i, opts.clone(), Box::new(Identity::new(1)), in_process(None))).unwrap();
    assert_eq!(venv.num_envs(), 4);
    let obs = venv.reset(Some(1)).unwrap();
    assert_eq!(obs.len(), 4);
    let acts = vec![vec![0.5]; 4];
    let mut last = None;
    for _ in 0..3 {
        let r = venv.step(&acts).unwrap();
        assert!(r.windows(2).all(|w| w[0] == w[1]));
        last = Some(r);
    }
    assert!(last.unwrap().iter().all(|r| r.terminated));
    // fresh episode on the next call, action ignored
    let r = venv.step(&acts).unwrap();
    assert!(r.iter().all(|r| !r.terminated && r.reward == 0.0 && r.observation == vec![0.0]));
    venv.close();
}

#[test]
fn single_env_vec_matches_a_plain_instance() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 0.5, "exit 0", "exit 0");
    let mut venv =
        VecEnv::new(1, |i| EnvInstance::new(i, opts.clone(), Box::new(Identity::new(1)), in_process(None))).unwrap();
    let mut env = EnvInstance::new(0, opts, Box::new(Identity::new(1)), in_process(None)).unwrap();
    assert_eq!(venv.reset(Some(3)).unwrap()[0], env.reset(Some(3)).unwrap().0);
    for a in [0.1, -0.4, 2.0, 0.0, 1.0] {
        assert_eq!(venv.step(&[vec![a]]).unwrap()[0], env.step(&[a]).unwrap());
    }
}

#[test]
fn vec_env_error_names_the_failing_instance() {
    let dir = tempfile::tempdir().unwrap();
    let opts = case(dir.path(), 0.1, 1.0, "exit 0", "exit 0");
    let mut venv = VecEnv::new(4, |i| {
        let fail = if i == 2 { Some(1) } else { None };
        EnvInstance::new(i, opts.clone(), Box::new(Identity::new(1)), in_process(fail))
    })
    .unwrap();
    venv.reset(None).unwrap();
    venv.step(&vec![vec![0.0]; 4]).unwrap();
    match venv.step(&vec![vec![0.0]; 4]) {
        Err(EnvError::Instance { idx, .. }) => assert_eq!(idx, 2),
        other => panic!("expected instance error, got {other:?}"),
    }
}
