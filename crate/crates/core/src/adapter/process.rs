//! Child processes running solver scripts.

use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::EnvError;

/// Bytes of stderr quoted in error messages.
pub const STDERR_TAIL: u64 = 2048;

/// How solver scripts are launched.
#[derive(Debug, Clone)]
pub struct ProcessConfig {
    /// Extra environment variables for every script.
    pub extra_env: Vec<(String, String)>,
    /// Directories put in front of `PATH`.
    pub path_prepend: Vec<PathBuf>,
    pub retry_budget: u32,
    /// Use named local sockets under the instance directory instead of
    /// loopback TCP.
    pub local_sockets: bool,
    /// Limit on the handshake and on each window exchange.
    pub timeout: Duration,
    /// Time allowed for a reset script to finish.
    pub script_timeout: Duration,
    /// Time between SIGTERM and SIGKILL.
    pub kill_grace: Duration,
    /// Time a solver gets to exit on its own after FINALIZE.
    pub exit_grace: Duration,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        ProcessConfig {
            extra_env: Vec::new(),
            path_prepend: Vec::new(),
            retry_budget: crate::transport::DEFAULT_RETRY_BUDGET,
            local_sockets: false,
            timeout: crate::coupling::DEFAULT_TIMEOUT,
            script_timeout: Duration::from_secs(60),
            kill_grace: Duration::from_secs(5),
            exit_grace: Duration::from_secs(2),
        }
    }
}

impl ProcessConfig {
    fn command(&self, dir: &Path, script: &str, env: &[(String, String)]) -> Command {
        let program = dir.join(script);
        let mut cmd = Command::new(std::path::absolute(&program).unwrap_or(program));
        cmd.current_dir(dir).process_group(0).stdin(Stdio::null());
        if !self.path_prepend.is_empty() {
            let mut paths = self.path_prepend.clone();
            if let Some(p) = std::env::var_os("PATH") {
                paths.extend(std::env::split_paths(&p));
            }
            if let Ok(joined) = std::env::join_paths(paths) {
                cmd.env("PATH", joined);
            }
        }
        for (k, v) in self.extra_env.iter().chain(env) {
            cmd.env(k, v);
        }
        cmd
    }
}

/// Last [`STDERR_TAIL`] bytes of a log file, lossily decoded.
pub fn log_tail(path: &Path) -> String {
    let Ok(mut f) = File::open(path) else {
        return String::new();
    };
    let len = f.metadata().map(|m| m.len()).unwrap_or(0);
    let _ = f.seek(SeekFrom::Start(len.saturating_sub(STDERR_TAIL)));
    let mut buf = Vec::new();
    let _ = f.read_to_end(&mut buf);
    String::from_utf8_lossy(&buf).into_owned()
}

fn log_files(log_dir: &Path, stem: &str) -> Result<(File, File, PathBuf), EnvError> {
    fs::create_dir_all(log_dir).map_err(|e| EnvError::Io(format!("creating {}", log_dir.display()), e))?;
    let out = log_dir.join(format!("{stem}.stdout"));
    let err = log_dir.join(format!("{stem}.stderr"));
    let open = |p: &Path| File::create(p).map_err(|e| EnvError::Io(format!("creating {}", p.display()), e));
    Ok((open(&out)?, open(&err)?, err))
}

fn signal_group(pid: u32, sig: libc::c_int) {
    // SAFETY: kill(2) has no memory-safety preconditions
    unsafe {
        libc::kill(-(pid as libc::pid_t), sig);
    }
}

fn wait_timeout(child: &mut Child, limit: Duration) -> Option<ExitStatus> {
    let deadline = Instant::now() + limit;
    loop {
        if let Ok(Some(status)) = child.try_wait() {
            return Some(status);
        }
        if Instant::now() >= deadline {
            return None;
        }
        thread::sleep(Duration::from_millis(10));
    }
}

/// Runs `script` in `dir` to completion. Output goes to `<log_dir>/<stem>.*`.
pub fn run_script(
    cfg: &ProcessConfig,
    solver: &str,
    dir: &Path,
    script: &str,
    env: &[(String, String)],
    log_dir: &Path,
    stem: &str,
) -> Result<(), EnvError> {
    let (out, err, err_path) = log_files(log_dir, stem)?;
    let mut child = cfg.command(dir, script, env).stdout(out).stderr(err).spawn().map_err(|e| EnvError::Spawn {
        solver: solver.to_owned(),
        script: script.to_owned(),
        source: e,
    })?;
    let status = match wait_timeout(&mut child, cfg.script_timeout) {
        Some(s) => s,
        None => {
            signal_group(child.id(), libc::SIGKILL);
            let _ = child.wait();
            return Err(EnvError::Script {
                solver: solver.to_owned(),
                script: script.to_owned(),
                status: "timed out".into(),
                stderr: log_tail(&err_path),
            });
        }
    };
    if !status.success() {
        return Err(EnvError::Script {
            solver: solver.to_owned(),
            script: script.to_owned(),
            status: status.to_string(),
            stderr: log_tail(&err_path),
        });
    }
    Ok(())
}

/// A running solver script, killed (with its process group) on drop.
#[derive(Debug)]
pub struct SolverProcess {
    pub solver: String,
    child: Child,
    stderr_path: PathBuf,
    status: Option<ExitStatus>,
}

impl SolverProcess {
    pub fn spawn(
        cfg: &ProcessConfig,
        solver: &str,
        dir: &Path,
        script: &str,
        env: &[(String, String)],
        log_dir: &Path,
        stem: &str,
    ) -> Result<Self, EnvError> {
        let (out, err, stderr_path) = log_files(log_dir, stem)?;
        let child = cfg.command(dir, script, env).stdout(out).stderr(err).spawn().map_err(|e| EnvError::Spawn {
            solver: solver.to_owned(),
            script: script.to_owned(),
            source: e,
        })?;
        debug!("spawned {solver} ({script}) as pid {}", child.id());
        Ok(SolverProcess { solver: solver.to_owned(), child, stderr_path, status: None })
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    /// Exit status if the process has ended.
    pub fn poll(&mut self) -> Option<ExitStatus> {
        if self.status.is_none() {
            if let Ok(Some(s)) = self.child.try_wait() {
                self.status = Some(s);
            }
        }
        self.status
    }

    pub fn stderr_tail(&self) -> String {
        log_tail(&self.stderr_path)
    }

    /// Error describing a process that ended unexpectedly.
    pub fn died_error(&mut self) -> EnvError {
        let status = self.poll().map(|s| s.to_string()).unwrap_or_else(|| "still running".into());
        EnvError::ChildDied { solver: self.solver.clone(), status, stderr: self.stderr_tail() }
    }

    /// Waits `grace` for a voluntary exit, then SIGTERM, then SIGKILL after
    /// `kill_grace`.
    pub fn stop(&mut self, grace: Duration, kill_grace: Duration) -> Option<ExitStatus> {
        if self.poll().is_some() {
            return self.status;
        }
        if let Some(s) = wait_timeout(&mut self.child, grace) {
            self.status = Some(s);
            return self.status;
        }
        signal_group(self.child.id(), libc::SIGTERM);
        if let Some(s) = wait_timeout(&mut self.child, kill_grace) {
            self.status = Some(s);
            return self.status;
        }
        warn!("{} ignored SIGTERM; killing", self.solver);
        signal_group(self.child.id(), libc::SIGKILL);
        self.status = self.child.wait().ok();
        self.status
    }
}

impl Drop for SolverProcess {
    fn drop(&mut self) {
        if self.poll().is_none() {
            self.stop(Duration::ZERO, Duration::from_secs(5));
        }
    }
}

/// Recursively copies `src` into `dst`, keeping file permissions.
pub fn copy_tree(src: &Path, dst: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dst)?;
    for entry in fs::read_dir(src)? {
        let entry = entry?;
        let target = dst.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}
