use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EnvError;

pub const DEFAULT_SCHEMA_FILE: &str = "coupling-schema.json";
pub const DEFAULT_INSTANCE_ROOT: &str = "instances";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    environment: EnvironmentSection,
    physics_simulation_engine: EngineSection,
    controller: ControllerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance_root: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvironmentSection {
    name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EngineSection {
    solvers: Vec<String>,
    reset_script: String,
    run_script: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    read_from: BTreeMap<String, String>,
    write_to: BTreeMap<String, String>,
}

/// Environment configuration. Relative paths are resolved against
/// `base_dir`, the directory holding the configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvOptions {
    pub environment_name: String,
    pub solvers: Vec<String>,
    pub reset_script: String,
    pub run_script: String,
    /// Field name → mesh the controller reads it from.
    pub read_from: BTreeMap<String, String>,
    /// Mesh → field name the controller writes on it.
    pub write_to: BTreeMap<String, String>,
    pub schema_path: PathBuf,
    pub instance_root: PathBuf,
    pub base_dir: PathBuf,
}

/// Parses an options document; relative paths stay relative to `.`.
pub fn parse_options(text: &str) -> Result<EnvOptions, EnvError> {
    parse_options_in(text, Path::new("."))
}

pub fn parse_options_in(text: &str, base_dir: &Path) -> Result<EnvOptions, EnvError> {
    let doc: Document = serde_json::from_str(text).map_err(|e| EnvError::Options(e.to_string()))?;
    let eng = doc.physics_simulation_engine;
    if eng.solvers.is_empty() {
        return Err(EnvError::Options("physics_simulation_engine.solvers is empty".into()));
    }
    for (i, s) in eng.solvers.iter().enumerate() {
        if s.is_empty() || s.contains('/') || s == "." || s == ".." {
            return Err(EnvError::Options(format!("invalid solver directory name '{s}'")));
        }
        if eng.solvers[..i].contains(s) {
            return Err(EnvError::Options(format!("solver '{s}' listed twice")));
        }
    }
    if eng.reset_script.is_empty() || eng.run_script.is_empty() {
        return Err(EnvError::Options("reset_script and run_script must be non-empty".into()));
    }
    if doc.controller.write_to.is_empty() {
        return Err(EnvError::Options("controller.write_to is empty: the controller must actuate something".into()));
    }
    let resolve = |p: Option<PathBuf>, default: &str| {
        let p = p.unwrap_or_else(|| PathBuf::from(default));
        if p.is_absolute() {
            p
        } else {
            base_dir.join(p)
        }
    };
    Ok(EnvOptions {
        environment_name: doc.environment.name,
        solvers: eng.solvers,
        reset_script: eng.reset_script,
        run_script: eng.run_script,
        read_from: doc.controller.read_from,
        write_to: doc.controller.write_to,
        schema_path: resolve(doc.schema_path, DEFAULT_SCHEMA_FILE),
        instance_root: resolve(doc.instance_root, DEFAULT_INSTANCE_ROOT),
        base_dir: base_dir.to_path_buf(),
    })
}

impl EnvOptions {
    pub fn from_path(path: &Path) -> Result<EnvOptions, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Options(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        parse_options_in(&text, base)
    }

    /// Directory holding the pristine copy of a solver case.
    pub fn solver_dir(&self, solver: &str) -> PathBuf {
        self.base_dir.join(solver)
    }

    /// Serializes back to the document format with paths relative to
    /// `base_dir` where possible.
    pub fn to_json_pretty(&self) -> String {
        let rel = |p: &Path| p.strip_prefix(&self.base_dir).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
        let doc = Document {
            environment: EnvironmentSection { name: self.environment_name.clone() },
            physics_simulation_engine: EngineSection {
                solvers: self.solvers.clone(),
                reset_script: self.reset_script.clone(),
                run_script: self.run_script.clone(),
            },
            controller: ControllerSection { read_from: self.read_from.clone(), write_to: self.write_to.clone() },
            schema_path: Some(rel(&self.schema_path)),
            instance_root: Some(rel(&self.instance_root)),
        };
        serde_json::to_string_pretty(&doc).expect("options serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = r#"{
    "environment": {
        "name": "example_1"
    },
    "physics_simulation_engine": {
        "solvers": ["fluid-openfoam"],
        "reset_script": "reset.sh",
        "run_script": "run.sh"
    },
    "controller": {
        "read_from": {},
        "write_to": {
            "jet1": "Velocity",
            "jet2": "Velocity"
        }
    }
}"#;

    #[test]
    fn reference_document() {
        let o = parse_options(LISTING).unwrap();
        assert_eq!(o.environment_name, "example_1");
        assert_eq!(o.solvers, vec!["fluid-openfoam"]);
        assert_eq!(o.write_to["jet1"], "Velocity");
        assert_eq!(o.write_to["jet2"], "Velocity");
        assert!(o.read_from.is_empty());
        assert_eq!(o.schema_path, Path::new("./coupling-schema.json"));
    }

    #[test]
    fn missing_key_is_named() {
        let doc = LISTING.replace(",\n        \"run_script\": \"run.sh\"", "");
        let err = parse_options(&doc).unwrap_err().to_string();
        assert!(err.contains("run_script"), "{err}");
    }

    #[test]
    fn two_solvers() {
        let doc = LISTING.replace(r#"["fluid-openfoam"]"#, r#"["fluid-channel", "solid-flap"]"#);
        assert_eq!(parse_options(&doc).unwrap().solvers.len(), 2);
    }

    #[test]
    fn rejections() {
        let unknown = LISTING.replacen("\"environment\"", "\"extra\": 1, \"environment\"", 1);
        assert!(parse_options(&unknown).unwrap_err().to_string().contains("extra"));
        let empty = LISTING.replace(r#"["fluid-openfoam"]"#, "[]");
        assert!(parse_options(&empty).is_err());
        let no_write = LISTING.replace(
            r#"{
            "jet1": "Velocity",
            "jet2": "Velocity"
        }"#,
            "{}",
        );
        assert!(parse_options(&no_write).unwrap_err().to_string().contains("write_to"));
    }

    #[test]
    fn round_trip_through_json() {
        let o = parse_options_in(LISTING, Path::new("/case")).unwrap();
        let back = parse_options_in(&o.to_json_pretty(), Path::new("/case")).unwrap();
        assert_eq!(back, o);
    }
}
