use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use log::{debug, info, warn};

use crate::coupling::{CouplingError, CouplingSchema, CouplingSession, FieldKey, FieldSpec};
use crate::transport::{connect, fake_connection_pair, listen, Connection, Endpoint, TransportError};

use super::hooks::{EnvHooks, FieldBuffers};
use super::options::EnvOptions;
use super::process::{copy_tree, run_script, ProcessConfig, SolverProcess};
use super::space::{BoxSpace, StepResult};
use super::{env_vars, EnvError};

/// Runs solver participants on threads inside the current process, over
/// the in-memory transport.
pub trait InProcessSolvers: Send + Sync {
    fn run(&self, participant: &str, session: &mut CouplingSession) -> Result<(), String>;
}

/// How the solver participants of an episode are started.
#[derive(Clone)]
pub enum Engine {
    /// Run each solver's reset and run scripts as child processes.
    Processes(ProcessConfig),
    /// Run solvers on threads with the in-memory transport.
    InProcess(Arc<dyn InProcessSolvers>),
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Engine::Processes(c) => f.debug_tuple("Processes").field(c).finish(),
            Engine::InProcess(_) => f.write_str("InProcess"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Episode,
    Closed,
}

/// Controller-side view of one coupling window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    /// Time at the end of the window.
    pub t: f64,
    /// Action applied during the window.
    pub action: Vec<f64>,
    pub reads: FieldBuffers,
}

type SolverThread = (String, JoinHandle<Result<(), String>>);

pub struct EnvInstance {
    idx: usize,
    options: EnvOptions,
    schema: Arc<CouplingSchema>,
    controller: String,
    hooks: Box<dyn EnvHooks>,
    engine: Engine,
    action_space: BoxSpace,
    observation_space: BoxSpace,
    substeps: usize,
    write_specs: Vec<FieldSpec>,
    read_specs: Vec<FieldSpec>,
    session: Option<CouplingSession>,
    processes: Vec<SolverProcess>,
    threads: Vec<SolverThread>,
    phase: Phase,
    episode_counter: u64,
    prev_action: Vec<f64>,
    prepared: bool,
    record: bool,
    trace: Vec<WindowRecord>,
}

fn is_executable(path: &Path) -> bool {
    fs::metadata(path).map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0).unwrap_or(false)
}

impl EnvInstance {
    pub fn new(idx: usize, options: EnvOptions, hooks: Box<dyn EnvHooks>, engine: Engine) -> Result<Self, EnvError> {
        let schema = Arc::new(
            CouplingSchema::from_path(&options.schema_path)
                .map_err(|e| EnvError::Options(format!("schema {}: {e}", options.schema_path.display())))?,
        );
        for s in &options.solvers {
            if !schema.participants.contains(s) {
                return Err(EnvError::Options(format!("solver '{s}' is not a participant of the coupling schema")));
            }
        }
        let others: Vec<&String> = schema.participants.iter().filter(|p| !options.solvers.contains(p)).collect();
        let controller = match others.as_slice() {
            [c] => (*c).clone(),
            [] => {
                return Err(EnvError::Options(
                    "every schema participant is a solver; none left for the controller".into(),
                ))
            }
            many => {
                return Err(EnvError::Options(format!(
                    "participants {many:?} have no solver directory; exactly one (the controller) may be left"
                )))
            }
        };
        let mut write_specs = Vec::new();
        for (mesh, field) in &options.write_to {
            let spec = schema
                .field(&FieldKey::new(field, mesh))
                .ok_or_else(|| EnvError::Options(format!("write_to: schema has no field {field}@{mesh}")))?;
            if spec.writer != controller {
                return Err(EnvError::Options(format!("write_to: {field}@{mesh} is written by '{}'", spec.writer)));
            }
            write_specs.push(spec.clone());
        }
        let mut read_specs = Vec::new();
        for (field, mesh) in &options.read_from {
            let spec = schema
                .field(&FieldKey::new(field, mesh))
                .ok_or_else(|| EnvError::Options(format!("read_from: schema has no field {field}@{mesh}")))?;
            if spec.reader() != controller {
                return Err(EnvError::Options(format!("read_from: {field}@{mesh} is read by '{}'", spec.reader())));
            }
            read_specs.push(spec.clone());
        }
        if let Engine::Processes(_) = engine {
            for s in &options.solvers {
                let dir = options.solver_dir(s);
                for script in [&options.reset_script, &options.run_script] {
                    let p = dir.join(script);
                    if !is_executable(&p) {
                        return Err(EnvError::Options(format!("{} is missing or not executable", p.display())));
                    }
                }
            }
        }
        let substeps = hooks.substeps_per_action();
        if substeps == 0 {
            return Err(EnvError::Options("substeps per action must be at least 1".into()));
        }
        if schema.n_windows() % substeps as u64 != 0 {
            return Err(EnvError::Options(format!(
                "{} coupling windows per episode are not a multiple of {substeps} windows per action",
                schema.n_windows()
            )));
        }
        let action_space = hooks.action_space();
        let observation_space = hooks.observation_space();
        Ok(EnvInstance {
            idx,
            options,
            schema,
            controller,
            hooks,
            engine,
            prev_action: vec![0.0; action_space.shape()],
            action_space,
            observation_space,
            substeps,
            write_specs,
            read_specs,
            session: None,
            processes: Vec::new(),
            threads: Vec::new(),
            phase: Phase::Idle,
            episode_counter: 0,
            prepared: false,
            record: false,
            trace: Vec::new(),
        })
    }

    pub fn idx(&self) -> usize {
        self.idx
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn episode_counter(&self) -> u64 {
        self.episode_counter
    }

    pub fn options(&self) -> &EnvOptions {
        &self.options
    }

    pub fn schema(&self) -> &Arc<CouplingSchema> {
        &self.schema
    }

    pub fn controller(&self) -> &str {
        &self.controller
    }

    pub fn action_space(&self) -> &BoxSpace {
        &self.action_space
    }

    pub fn observation_space(&self) -> &BoxSpace {
        &self.observation_space
    }

    pub fn substeps_per_action(&self) -> usize {
        self.substeps
    }

    /// Steps in every episode.
    pub fn episode_steps(&self) -> usize {
        (self.schema.n_windows() / self.substeps as u64) as usize
    }

    /// Simulation time of the running episode.
    pub fn time(&self) -> f64 {
        self.session.as_ref().map(|s| s.time()).unwrap_or(0.0)
    }

    pub fn hooks(&self) -> &dyn EnvHooks {
        self.hooks.as_ref()
    }

    /// PIDs of solver processes spawned for the current episode.
    pub fn child_pids(&self) -> Vec<u32> {
        self.processes.iter().map(SolverProcess::pid).collect()
    }

    /// Working directory of `solver` for this instance.
    pub fn instance_dir(&self, solver: &str) -> PathBuf {
        self.options.instance_root.join(format!("env_{}", self.idx)).join(solver)
    }

    /// Keeps a per-window trace of actions and read buffers.
    pub fn set_recording(&mut self, on: bool) {
        self.record = on;
    }

    pub fn take_trace(&mut self) -> Vec<WindowRecord> {
        std::mem::take(&mut self.trace)
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<(Vec<f64>, BTreeMap<String, String>), EnvError> {
        if self.phase == Phase::Closed {
            return Err(EnvError::State { op: "reset", phase: self.phase });
        }
        self.teardown();
        self.episode_counter += 1;
        self.trace.clear();
        self.prev_action = vec![0.0; self.action_space.shape()];
        self.hooks.on_reset(seed);
        info!("env {}: starting episode {}", self.idx, self.episode_counter);

        let mut session = CouplingSession::new(self.schema.clone(), &self.controller)?;
        if let Engine::Processes(cfg) = &self.engine {
            session.set_timeout(cfg.timeout);
        }
        for (mesh, coords) in self.hooks.interface_vertices() {
            session.set_mesh_vertices(&mesh, &coords)?;
        }
        let started = match self.engine.clone() {
            Engine::Processes(cfg) => self.start_processes(&cfg, &mut session, seed),
            Engine::InProcess(solvers) => self.start_threads(solvers, &mut session),
        };
        if let Err(e) = started {
            self.session = Some(session);
            self.teardown();
            return Err(e);
        }
        if let Err(e) = session.initialize() {
            self.session = Some(session);
            return Err(self.fail(e));
        }
        self.session = Some(session);
        self.phase = Phase::Episode;

        let zeros: FieldBuffers =
            self.read_specs.iter().map(|s| (s.key(), vec![0.0; self.schema.buffer_len(s)])).collect();
        let obs = match self.hooks.get_observation(&zeros, &self.read_specs, 0.0) {
            Ok(o) => o,
            Err(e) => {
                self.teardown();
                return Err(e);
            }
        };
        if let Err(e) = self.check_observation(&obs) {
            self.teardown();
            return Err(e);
        }
        Ok((obs, BTreeMap::new()))
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.phase != Phase::Episode {
            return Err(EnvError::State { op: "step", phase: self.phase });
        }
        if action.len() != self.action_space.shape() {
            return Err(EnvError::Action(format!(
                "expected {} components, got {}",
                self.action_space.shape(),
                action.len()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(EnvError::Action(format!("non-finite action {action:?}")));
        }
        match self.step_inner(action) {
            Ok(r) => Ok(r),
            Err(e) => {
                self.teardown();
                Err(e)
            }
        }
    }

    fn step_inner(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let a_new = self.action_space.clamp(action);
        let k_total = self.substeps;
        let mut window_reads = Vec::with_capacity(k_total);
        for k in 1..=k_total {
            let a_k: Vec<f64> = if k == k_total {
                a_new.clone()
            } else {
                let frac = k as f64 / k_total as f64;
                self.prev_action.iter().zip(&a_new).map(|(p, n)| p + frac * (n - p)).collect()
            };
            let buffers = self.hooks.get_action(&a_k, &self.write_specs)?;
            self.write_buffers(&buffers)?;
            let session = self.session.as_mut().expect("session exists during an episode");
            if let Err(e) = session.advance(self.schema.window_size) {
                return Err(self.fail(e));
            }
            let session = self.session.as_ref().unwrap();
            let mut reads = FieldBuffers::new();
            for spec in &self.read_specs {
                reads.insert(spec.key(), session.read_field(&spec.name, &spec.mesh)?.to_vec());
            }
            if self.record {
                self.trace.push(WindowRecord { t: session.time(), action: a_k, reads: reads.clone() });
            }
            window_reads.push(reads);
        }
        let t = self.time();
        let last = window_reads.last().cloned().unwrap_or_default();
        let observation = self.hooks.get_observation(&last, &self.read_specs, t)?;
        self.check_observation(&observation)?;
        let reward = self.hooks.get_reward(&window_reads, t)?;
        if !reward.is_finite() {
            return Err(EnvError::Hook(format!("non-finite reward {reward}")));
        }
        self.prev_action = a_new;
        let terminated = !self.session.as_ref().unwrap().is_coupling_ongoing()?;
        if terminated {
            self.finish_episode();
        }
        Ok(StepResult { observation, reward, terminated, truncated: false, info: BTreeMap::new() })
    }

    fn write_buffers(&mut self, buffers: &FieldBuffers) -> Result<(), EnvError> {
        for key in buffers.keys() {
            if !self.write_specs.iter().any(|s| s.key() == *key) {
                return Err(EnvError::Hook(format!("get_action produced undeclared field {key}")));
            }
        }
        let session = self.session.as_mut().expect("session exists during an episode");
        for spec in &self.write_specs {
            let key = spec.key();
            let values =
                buffers.get(&key).ok_or_else(|| EnvError::Hook(format!("get_action did not fill field {key}")))?;
            let want = self.schema.buffer_len(spec);
            if values.len() != want {
                return Err(EnvError::Hook(format!(
                    "get_action returned {} values for {key}, expected {want}",
                    values.len()
                )));
            }
            session.write_field(&spec.name, &spec.mesh, values)?;
        }
        Ok(())
    }

    fn check_observation(&self, obs: &[f64]) -> Result<(), EnvError> {
        if obs.len() != self.observation_space.shape() {
            return Err(EnvError::Hook(format!(
                "observation has length {}, observation space has {}",
                obs.len(),
                self.observation_space.shape()
            )));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::Hook(format!("non-finite observation {obs:?}")));
        }
        Ok(())
    }

    fn start_processes(
        &mut self,
        cfg: &ProcessConfig,
        session: &mut CouplingSession,
        seed: Option<u64>,
    ) -> Result<(), EnvError> {
        let root = self.options.instance_root.join(format!("env_{}", self.idx));
        if !self.prepared {
            for s in &self.options.solvers {
                let dst = root.join(s);
                if dst.exists() {
                    fs::remove_dir_all(&dst).map_err(|e| EnvError::Io(format!("clearing {}", dst.display()), e))?;
                }
                copy_tree(&self.options.solver_dir(s), &dst)
                    .map_err(|e| EnvError::Io(format!("copying solver case {s}"), e))?;
            }
            self.prepared = true;
        }
        let endpoint = if cfg.local_sockets {
            Endpoint::local(fs::canonicalize(&root).unwrap_or(root.clone()).join("flowbridge.sock"))
        } else {
            Endpoint::free_tcp(self.schema.links.len()).map_err(CouplingError::Transport)?
        };
        let schema_path = fs::canonicalize(&self.options.schema_path).unwrap_or(self.options.schema_path.clone());
        let episode = self.episode_counter;
        let base_env = |solver: &str| {
            let mut env = vec![
                (env_vars::ENDPOINT.to_owned(), endpoint.to_string()),
                (env_vars::SCHEMA.to_owned(), schema_path.display().to_string()),
                (env_vars::PARTICIPANT.to_owned(), solver.to_owned()),
                (env_vars::EPISODE.to_owned(), episode.to_string()),
            ];
            if let Some(s) = seed {
                env.push((env_vars::SEED.to_owned(), s.to_string()));
            }
            env
        };
        for s in &self.options.solvers {
            let dir = root.join(s);
            run_script(
                cfg,
                s,
                &dir,
                &self.options.reset_script,
                &base_env(s),
                &dir.join("log"),
                &format!("reset-{episode}"),
            )?;
        }
        let links = session.links();
        let mut listeners = Vec::new();
        for link in links.iter().filter(|l| l.leader) {
            let l = listen(&endpoint.for_link(link.index)).map_err(CouplingError::Transport)?;
            listeners.push((link.peer.clone(), l));
        }
        for s in &self.options.solvers {
            let dir = root.join(s);
            let p = SolverProcess::spawn(
                cfg,
                s,
                &dir,
                &self.options.run_script,
                &base_env(s),
                &dir.join("log"),
                &format!("run-{episode}"),
            )?;
            self.processes.push(p);
        }
        for link in links.iter().filter(|l| !l.leader) {
            let conn = connect(&endpoint.for_link(link.index), cfg.retry_budget)
                .map_err(|e| self.child_error(e.into_coupling(&link.peer)))?;
            session.attach(&link.peer, conn)?;
        }
        for (peer, listener) in listeners {
            let died = Cell::new(None);
            let processes = &mut self.processes;
            let res = listener.accept(cfg.timeout, || {
                for (i, p) in processes.iter_mut().enumerate() {
                    if p.poll().is_some() {
                        died.set(Some(i));
                        return Err(TransportError::Closed);
                    }
                }
                Ok(())
            });
            match res {
                Ok(conn) => attach_conn(session, &peer, conn)?,
                Err(e) => {
                    if let Some(i) = died.get() {
                        return Err(self.processes[i].died_error());
                    }
                    return Err(self.child_error(e.into_coupling(&peer)));
                }
            }
        }
        Ok(())
    }

    fn start_threads(
        &mut self,
        solvers: Arc<dyn InProcessSolvers>,
        session: &mut CouplingSession,
    ) -> Result<(), EnvError> {
        let mut ends: BTreeMap<String, Vec<(String, Connection)>> = BTreeMap::new();
        for [a, b] in &self.schema.links {
            let (ca, cb) = fake_connection_pair();
            ends.entry(a.clone()).or_default().push((b.clone(), ca));
            ends.entry(b.clone()).or_default().push((a.clone(), cb));
        }
        for (peer, conn) in ends.remove(&self.controller).unwrap_or_default() {
            session.attach(&peer, conn)?;
        }
        for (name, conns) in ends {
            let mut s = CouplingSession::new(self.schema.clone(), &name)?;
            for (peer, conn) in conns {
                s.attach(&peer, conn)?;
            }
            let solvers = solvers.clone();
            let participant = name.clone();
            let handle = thread::Builder::new()
                .name(format!("env{}-{name}", self.idx))
                .spawn(move || solvers.run(&participant, &mut s))
                .map_err(|e| EnvError::Io(format!("spawning solver thread {name}"), e))?;
            self.threads.push((name, handle));
        }
        Ok(())
    }

    /// Tears the episode down after a coupling error and attaches what the
    /// solvers left on stderr.
    fn fail(&mut self, e: CouplingError) -> EnvError {
        if let Some(s) = self.session.as_mut() {
            s.abort(&e.to_string());
        }
        let err = self.child_error(e);
        self.teardown();
        err
    }

    fn child_error(&mut self, source: CouplingError) -> EnvError {
        let mut children = String::new();
        for p in &mut self.processes {
            let status = p.stop(std::time::Duration::from_millis(500), std::time::Duration::from_secs(5));
            if status.map(|s| !s.success()).unwrap_or(true) {
                let st = status.map(|s| s.to_string()).unwrap_or_else(|| "unknown".into());
                let _ = write!(children, "\n{} ({st}); stderr tail:\n{}", p.solver, p.stderr_tail());
            }
        }
        for (name, h) in self.threads.drain(..) {
            match h.join() {
                Ok(Err(msg)) => {
                    let _ = write!(children, "\n{name}: {msg}");
                }
                Err(_) => {
                    let _ = write!(children, "\n{name}: panicked");
                }
                Ok(Ok(())) => {}
            }
        }
        EnvError::Coupling { source, children }
    }

    fn finish_episode(&mut self) {
        if let Some(mut s) = self.session.take() {
            s.finalize();
        }
        let (grace, kill) = match &self.engine {
            Engine::Processes(c) => (c.exit_grace, c.kill_grace),
            Engine::InProcess(_) => Default::default(),
        };
        for mut p in self.processes.drain(..) {
            match p.stop(grace, kill) {
                Some(st) if st.success() => debug!("env {}: {} exited cleanly", self.idx, p.solver),
                st => warn!("env {}: {} ended with {st:?}", self.idx, p.solver),
            }
        }
        for (name, h) in self.threads.drain(..) {
            match h.join() {
                Ok(Ok(())) => {}
                Ok(Err(msg)) => warn!("env {}: solver {name} failed: {msg}", self.idx),
                Err(_) => warn!("env {}: solver {name} panicked", self.idx),
            }
        }
        if self.phase != Phase::Closed {
            self.phase = Phase::Idle;
        }
    }

    /// Ends any running episode: finalizes the session and stops children.
    fn teardown(&mut self) {
        self.finish_episode();
    }

    /// Finalizes the session, stops all children and releases hook
    /// resources. Idempotent; the instance cannot be reset afterwards.
    pub fn close(&mut self) {
        if self.phase == Phase::Closed {
            return;
        }
        self.teardown();
        self.hooks.close_external_resources();
        self.phase = Phase::Closed;
    }
}

fn attach_conn(session: &mut CouplingSession, peer: &str, conn: Connection) -> Result<(), EnvError> {
    session.attach(peer, conn).map_err(EnvError::from)
}

impl Drop for EnvInstance {
    fn drop(&mut self) {
        self.close();
    }
}

trait IntoCoupling {
    fn into_coupling(self, peer: &str) -> CouplingError;
}

impl IntoCoupling for TransportError {
    fn into_coupling(self, peer: &str) -> CouplingError {
        match self {
            TransportError::Timeout => CouplingError::Timeout { peer: peer.to_owned() },
            e => CouplingError::Transport(e),
        }
    }
}
