//! Per-run output directories and their manifest.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::{runtime, CliError, VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: String,
    pub seed: u64,
    pub version: String,
    pub out_dir: PathBuf,
    pub config_paths: Vec<PathBuf>,
    pub engine: String,
    pub args: Vec<String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    /// `running`, `ok` or `failed: <reason>`.
    pub status: String,
}

pub struct RunDir {
    pub path: PathBuf,
    pub manifest: RunManifest,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunDir {
    /// Creates `<out>/<command>-<scenario>-seed<seed>-<timestamp>` (with a
    /// numeric suffix if that name is taken) and writes the manifest.
    pub fn create(out: &Path, command: &str, scenario: &str, seed: u64, engine: &str) -> Result<RunDir, CliError> {
        fs::create_dir_all(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
        let stamp = Utc::now().format("%Y%m%dT%H%M%S%3fZ");
        let base = format!("{command}-{scenario}-seed{seed}-{stamp}");
        let mut path = out.join(&base);
        let mut n = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    path = out.join(format!("{base}-{n}"));
                    n += 1;
                }
                Err(e) => return Err(runtime(format!("{}: {e}", path.display()))),
            }
        }
        let manifest = RunManifest {
            command: command.into(),
            scenario: scenario.into(),
            seed,
            version: VERSION.into(),
            out_dir: path.clone(),
            config_paths: Vec::new(),
            engine: engine.into(),
            args: std::env::args().collect(),
            started_at: now(),
            finished_at: None,
            status: "running".into(),
        };
        let run = RunDir { path, manifest };
        run.write_manifest()?;
        Ok(run)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_manifest(&self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let p = self.file(MANIFEST_FILE);
        fs::write(&p, text).map_err(|e| runtime(format!("{}: {e}", p.display())))
    }

    pub fn finish(&mut self, result: &Result<(), CliError>) -> Result<(), CliError> {
        self.manifest.finished_at = Some(now());
        self.manifest.status = match result {
            Ok(()) => "ok".into(),
            Err(e) => format!("failed: {e}"),
        };
        self.write_manifest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dirs_are_unique_and_start_with_a_manifest() {
        let out = tempfile::tempdir().unwrap();
        let a = RunDir::create(out.path(), "baseline", "jet-cylinder", 3, "processes").unwrap();
        let b = RunDir::create(out.path(), "baseline", "jet-cylinder", 3, "processes").unwrap();
        assert_ne!(a.path, b.path);
        let name = a.path.file_name().unwrap().to_str().unwrap();
        assert!(name.starts_with("baseline-jet-cylinder-seed3-"));
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(a.file(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(m.status, "running");
        assert_eq!(m.seed, 3);
    }
}
