//! Materializes the case a run operates on inside its run directory.

use std::fs;
use std::path::{Path, PathBuf};

use flowbridge_core::adapter::{copy_tree, EnvOptions, DEFAULT_INSTANCE_ROOT, DEFAULT_SCHEMA_FILE};
use flowbridge_core::coupling::CouplingSchema;
use flowbridge_core::scenarios::{scaffold, Case, ScenarioConfig, ScenarioKind, SOLVER_PARAMS_FILE};

use crate::run_dir::RunDir;
use crate::{runtime, usage, CliError};

pub const CASE_DIR: &str = "case";

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Loads the scenario named on the command line, from `config` when given
/// and from the built-in defaults otherwise, optionally with a new episode
/// length. The case is copied (or scaffolded) into `<run>/case` so that
/// every file the run used sits next to its output.
pub fn prepare(
    run: &mut RunDir,
    kind: ScenarioKind,
    config: Option<&Path>,
    end_time: Option<f64>,
) -> Result<(EnvOptions, ScenarioConfig), CliError> {
    let dir = run.file(CASE_DIR);
    let case = match config {
        None => {
            let mut scenario = ScenarioConfig::default_for(kind);
            if let Some(t) = end_time {
                scenario = scenario.with_end_time(t).map_err(usage)?;
            }
            scaffold(&dir, &scenario).map_err(runtime)?
        }
        Some(path) => {
            run.manifest.config_paths.push(path.to_path_buf());
            copy_case(path, &dir, kind, end_time)?
        }
    };
    run.manifest.config_paths.extend([case.env_config.clone(), case.scenario.clone(), case.schema.clone()]);
    run.write_manifest()?;
    Case::load(&case.env_config).map_err(usage)
}

fn copy_case(config: &Path, dir: &Path, kind: ScenarioKind, end_time: Option<f64>) -> Result<Case, CliError> {
    let (options, mut scenario) = Case::load(config).map_err(usage)?;
    if scenario.kind() != kind {
        return Err(usage(format!("{} describes scenario '{}', not '{kind}'", config.display(), scenario.kind())));
    }
    let mut schema = CouplingSchema::from_path(&options.schema_path).map_err(usage)?;
    if let Some(t) = end_time {
        scenario = scenario.with_end_time(t).map_err(usage)?;
        schema.end_time = t;
        schema = schema.validated().map_err(usage)?;
    }
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    for s in &options.solvers {
        let dst = dir.join(s);
        copy_tree(&options.solver_dir(s), &dst).map_err(|e| runtime(format!("copying solver '{s}': {e}")))?;
        if end_time.is_some() && dst.join(SOLVER_PARAMS_FILE).exists() {
            write(&dst.join(SOLVER_PARAMS_FILE), &scenario.to_json_pretty())?;
        }
    }
    let case = Case::at(dir);
    let copied = EnvOptions {
        schema_path: dir.join(DEFAULT_SCHEMA_FILE),
        instance_root: dir.join(DEFAULT_INSTANCE_ROOT),
        base_dir: dir.to_path_buf(),
        ..options
    };
    write(&case.schema, &schema.to_json_pretty())?;
    write(&case.scenario, &scenario.to_json_pretty())?;
    write(&case.env_config, &copied.to_json_pretty())?;
    Ok(case)
}

/// Writes a fresh case for `kind` into `dir`.
pub fn scaffold_case(dir: &Path, kind: ScenarioKind) -> Result<PathBuf, CliError> {
    if dir.join(flowbridge_core::scenarios::ENV_CONFIG_FILE).exists() {
        return Err(usage(format!("{} already holds a case", dir.display())));
    }
    let case = scaffold(dir, &ScenarioConfig::default_for(kind)).map_err(runtime)?;
    Ok(case.env_config)
}
