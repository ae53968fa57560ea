//! The three environments: jet-actuated cylinder, rotating cylinder and
//! channel flow over an elastic flap. Each scenario is one JSON document
//! that feeds the environment hooks, the solver parameters and the
//! coupling schema.

mod channel;
mod cylinder;
mod geometry;
mod solvers;

use std::fmt;
use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use channel::{flap_reward, FlapHooks};
pub use cylinder::{cylinder_reward, jet_profile, jet_velocity, rot_velocity, JetCylinderHooks, RotatingCylinderHooks};
pub use geometry::{ArcMesh, CylinderGeometry};
pub use solvers::ScenarioSolvers;

use crate::adapter::{Engine, EnvError, EnvHooks, EnvInstance, EnvOptions, VecEnv};
use crate::coupling::{CouplingError, CouplingMesh, CouplingSchema, FieldSpec};
use crate::surrogate::{names, ActuationMode, ChannelParams, SurrogateError, WakeParams, WakeSetup, WakeSolver};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const ENV_CONFIG_FILE: &str = "env-config.json";
pub const SOLVER_PARAMS_FILE: &str = "params.json";
pub const RESET_SCRIPT: &str = "reset.sh";
pub const RUN_SCRIPT: &str = "run.sh";

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    JetCylinder,
    RotatingCylinder,
    PerpendicularFlap,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] =
        [ScenarioKind::JetCylinder, ScenarioKind::RotatingCylinder, ScenarioKind::PerpendicularFlap];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::JetCylinder => "jet-cylinder",
            ScenarioKind::RotatingCylinder => "rotating-cylinder",
            ScenarioKind::PerpendicularFlap => "perpendicular-flap",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ScenarioError::Config(format!("unknown scenario '{s}'")))
    }
}

/// Mean drag coefficient of an unactuated episode.
pub fn calibrate_cd_base(wake: &WakeParams, window_size: f64, end_time: f64) -> Result<f64, SurrogateError> {
    let mut solver = WakeSolver::new(wake.clone(), window_size)?;
    let n = (end_time / window_size).round() as usize;
    let mut sum = 0.0;
    for _ in 0..n {
        solver.advance_window(0.0)?;
        sum += solver.forces().0;
    }
    Ok(sum / n as f64)
}

fn check(ok: bool, msg: &str) -> Result<(), ScenarioError> {
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::Config(msg.into()))
    }
}

fn check_timing(window_size: f64, end_time: f64, k: usize) -> Result<(), ScenarioError> {
    check(window_size > 0.0 && end_time > 0.0, "window_size and end_time must be positive")?;
    check(k >= 1, "substeps_per_action must be at least 1")?;
    let n = (end_time / window_size).round();
    check((end_time - n * window_size).abs() <= 1e-9 * end_time, "end_time is not a multiple of window_size")?;
    check((n as u64).is_multiple_of(k as u64), "episode windows are not a multiple of substeps_per_action")
}

fn mesh(name: &str, owner: &str, vertices: Vec<Vec<f64>>, face_weights: Vec<f64>) -> CouplingMesh {
    CouplingMesh { name: name.into(), dim: 2, owner: owner.into(), vertices, face_weights }
}

fn field(name: &str, mesh: &str, components: usize, writer: &str, reader: Option<&str>) -> FieldSpec {
    FieldSpec {
        name: name.into(),
        mesh: mesh.into(),
        components,
        writer: writer.into(),
        reader: reader.map(Into::into),
    }
}

fn cylinder_output_meshes(g: &CylinderGeometry) -> Vec<CouplingMesh> {
    let probes = g.probes();
    vec![
        mesh(names::FORCES_MESH, names::WAKE_FLUID, vec![g.center.to_vec()], vec![1.0]),
        mesh(
            names::PROBES_MESH,
            names::WAKE_FLUID,
            probes.iter().map(|p| p.to_vec()).collect(),
            vec![1.0; probes.len()],
        ),
    ]
}

fn cylinder_output_fields() -> Vec<FieldSpec> {
    vec![
        field(names::FORCES, names::FORCES_MESH, 2, names::WAKE_FLUID, None),
        field(names::PROBES, names::PROBES_MESH, 1, names::WAKE_FLUID, None),
    ]
}

/// Cylinder with two synthetic jets on its poles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetCylinderScenario {
    pub geometry: CylinderGeometry,
    pub jet_width_deg: f64,
    /// Polar angles of jet1 and jet2.
    pub jet_centers_deg: [f64; 2],
    pub jet_vertices: usize,
    /// Largest flow rate through one jet (m³/s).
    pub q_max: f64,
    /// Coupling windows per control action (K).
    pub substeps_per_action: usize,
    pub cd_base: f64,
    pub lift_penalty: f64,
    pub window_size: f64,
    pub end_time: f64,
    pub wake: WakeParams,
}

impl Default for JetCylinderScenario {
    fn default() -> Self {
        let q_max = 2.5e-4;
        let wake = WakeParams::new(ActuationMode::Jet, q_max);
        let (window_size, end_time) = (0.002, 2.0);
        let cd_base = calibrate_cd_base(&wake, window_size, end_time).expect("default wake parameters are valid");
        JetCylinderScenario {
            geometry: CylinderGeometry::default(),
            jet_width_deg: 10.0,
            jet_centers_deg: [90.0, 270.0],
            jet_vertices: 11,
            q_max,
            substeps_per_action: 50,
            cd_base,
            lift_penalty: 0.2,
            window_size,
            end_time,
            wake,
        }
    }
}

impl JetCylinderScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.geometry.validate()?;
        check(self.q_max > 0.0, "q_max must be positive")?;
        check(self.jet_vertices >= 1, "jets need at least one vertex")?;
        check(self.jet_width_deg > 0.0 && self.jet_width_deg < 180.0, "jet_width_deg must lie in (0, 180)")?;
        check(self.lift_penalty >= 0.0 && self.cd_base.is_finite(), "lift_penalty must be ≥ 0 and cd_base finite")?;
        check(self.wake.actuation_mode == ActuationMode::Jet, "wake.actuation_mode must be 'jet'")?;
        check((self.wake.q_max_ref - self.q_max).abs() <= 1e-12 * self.q_max, "wake.q_max_ref must equal q_max")?;
        self.wake.validate()?;
        check_timing(self.window_size, self.end_time, self.substeps_per_action)
    }

    pub fn jet_meshes(&self) -> (ArcMesh, ArcMesh) {
        let arc = |c| self.geometry.jet_arc(c, self.jet_width_deg, self.jet_vertices);
        (arc(self.jet_centers_deg[0]), arc(self.jet_centers_deg[1]))
    }

    pub fn coupling_schema(&self) -> CouplingSchema {
        let (j1, j2) = self.jet_meshes();
        let mut meshes = vec![
            mesh(names::JET1_MESH, names::WAKE_FLUID, j1.coords(), j1.weights),
            mesh(names::JET2_MESH, names::WAKE_FLUID, j2.coords(), j2.weights),
        ];
        meshes.extend(cylinder_output_meshes(&self.geometry));
        let mut fields = vec![
            field(names::VELOCITY, names::JET1_MESH, 2, names::CONTROLLER, None),
            field(names::VELOCITY, names::JET2_MESH, 2, names::CONTROLLER, None),
        ];
        fields.extend(cylinder_output_fields());
        cylinder_schema(meshes, fields, self.window_size, self.end_time)
    }
}

fn cylinder_schema(
    meshes: Vec<CouplingMesh>,
    fields: Vec<FieldSpec>,
    window_size: f64,
    end_time: f64,
) -> CouplingSchema {
    CouplingSchema {
        participants: vec![names::CONTROLLER.into(), names::WAKE_FLUID.into()],
        links: vec![[names::CONTROLLER.into(), names::WAKE_FLUID.into()]],
        meshes,
        fields,
        window_size,
        end_time,
    }
}

/// Cylinder spinning about its own axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotatingCylinderScenario {
    pub geometry: CylinderGeometry,
    /// Largest angular speed (rad/s).
    pub omega_max: f64,
    pub surface_vertices: usize,
    pub substeps_per_action: usize,
    pub cd_base: f64,
    pub lift_penalty: f64,
    pub window_size: f64,
    pub end_time: f64,
    pub wake: WakeParams,
}

impl Default for RotatingCylinderScenario {
    fn default() -> Self {
        let omega_max = 5.0;
        let wake = WakeParams::new(ActuationMode::Rotation, omega_max);
        let (window_size, end_time) = (0.002, 2.0);
        let cd_base = calibrate_cd_base(&wake, window_size, end_time).expect("default wake parameters are valid");
        RotatingCylinderScenario {
            geometry: CylinderGeometry::default(),
            omega_max,
            surface_vertices: 36,
            substeps_per_action: 50,
            cd_base,
            lift_penalty: 0.2,
            window_size,
            end_time,
            wake,
        }
    }
}

impl RotatingCylinderScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.geometry.validate()?;
        check(self.omega_max > 0.0, "omega_max must be positive")?;
        check(self.surface_vertices >= 1, "the cylinder surface needs at least one vertex")?;
        check(self.lift_penalty >= 0.0 && self.cd_base.is_finite(), "lift_penalty must be ≥ 0 and cd_base finite")?;
        check(self.wake.actuation_mode == ActuationMode::Rotation, "wake.actuation_mode must be 'rotation'")?;
        check(
            (self.wake.q_max_ref - self.omega_max).abs() <= 1e-12 * self.omega_max,
            "wake.q_max_ref must equal omega_max",
        )?;
        self.wake.validate()?;
        check_timing(self.window_size, self.end_time, self.substeps_per_action)
    }

    pub fn surface_mesh(&self) -> ArcMesh {
        self.geometry.surface_ring(self.surface_vertices)
    }

    pub fn coupling_schema(&self) -> CouplingSchema {
        let s = self.surface_mesh();
        let mut meshes = vec![mesh(names::CYLINDER_MESH, names::WAKE_FLUID, s.coords(), s.weights)];
        meshes.extend(cylinder_output_meshes(&self.geometry));
        let mut fields = vec![field(names::VELOCITY, names::CYLINDER_MESH, 2, names::CONTROLLER, None)];
        fields.extend(cylinder_output_fields());
        cylinder_schema(meshes, fields, self.window_size, self.end_time)
    }
}

/// Channel whose inlet jet position drives an elastic flap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlapScenario {
    pub channel: ChannelParams,
    pub substeps_per_action: usize,
    /// Admissible jet-center positions (m).
    pub y_bounds: [f64; 2],
    /// Sinusoid of the open-loop controller: `y0 + amplitude·sin(2π·frequency·t)`.
    pub y0: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub window_size: f64,
    pub end_time: f64,
}

impl Default for FlapScenario {
    fn default() -> Self {
        FlapScenario {
            channel: ChannelParams::default(),
            substeps_per_action: 1,
            y_bounds: [0.1, 0.9],
            y0: 0.5,
            amplitude: 0.3,
            frequency: 0.5,
            window_size: 0.01,
            end_time: 10.0,
        }
    }
}

impl FlapScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.channel.validate()?;
        let [lo, hi] = self.y_bounds;
        check(0.0 < lo && lo < hi && hi < self.channel.h, "y_bounds must satisfy 0 < low < high < H")?;
        check(self.frequency >= 0.0 && self.amplitude >= 0.0, "amplitude and frequency must be non-negative")?;
        check(
            self.y0 - self.amplitude >= lo - 1e-12 && self.y0 + self.amplitude <= hi + 1e-12,
            "y0 ± amplitude leaves the action bounds",
        )?;
        check_timing(self.window_size, self.end_time, self.substeps_per_action)
    }

    pub fn coupling_schema(&self) -> CouplingSchema {
        let h = self.channel.h;
        let flap = vec![vec![2.0 * h, 0.5 * self.channel.y_flap]];
        let tip = vec![vec![2.0 * h, self.channel.y_flap]];
        CouplingSchema {
            participants: vec![names::CONTROLLER.into(), names::CHANNEL_FLUID.into(), names::FLAP_SOLID.into()],
            links: vec![
                [names::CONTROLLER.into(), names::CHANNEL_FLUID.into()],
                [names::CHANNEL_FLUID.into(), names::FLAP_SOLID.into()],
            ],
            meshes: vec![
                mesh(names::INLET_MESH, names::CHANNEL_FLUID, vec![vec![0.0, 0.5 * h]], vec![h]),
                mesh(names::TIP_MESH, names::CHANNEL_FLUID, tip, vec![1.0]),
                mesh(names::FLAP_MESH, names::FLAP_SOLID, flap, vec![self.channel.y_flap]),
            ],
            fields: vec![
                field(names::JET_CENTER, names::INLET_MESH, 1, names::CONTROLLER, None),
                field(names::TIP_DISPLACEMENT, names::TIP_MESH, 1, names::CHANNEL_FLUID, Some(names::CONTROLLER)),
                field(names::FORCE, names::FLAP_MESH, 1, names::CHANNEL_FLUID, None),
                field(names::DISPLACEMENT, names::FLAP_MESH, 1, names::FLAP_SOLID, None),
            ],
            window_size: self.window_size,
            end_time: self.end_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum ScenarioConfig {
    JetCylinder(JetCylinderScenario),
    RotatingCylinder(RotatingCylinderScenario),
    PerpendicularFlap(FlapScenario),
}

impl ScenarioConfig {
    pub fn default_for(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::JetCylinder => ScenarioConfig::JetCylinder(Default::default()),
            ScenarioKind::RotatingCylinder => ScenarioConfig::RotatingCylinder(Default::default()),
            ScenarioKind::PerpendicularFlap => ScenarioConfig::PerpendicularFlap(Default::default()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io(path.into(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn kind(&self) -> ScenarioKind {
        match self {
            ScenarioConfig::JetCylinder(_) => ScenarioKind::JetCylinder,
            ScenarioConfig::RotatingCylinder(_) => ScenarioKind::RotatingCylinder,
            ScenarioConfig::PerpendicularFlap(_) => ScenarioKind::PerpendicularFlap,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match self {
            ScenarioConfig::JetCylinder(s) => s.validate(),
            ScenarioConfig::RotatingCylinder(s) => s.validate(),
            ScenarioConfig::PerpendicularFlap(s) => s.validate(),
        }
    }

    pub fn window_size(&self) -> f64 {
        match self {
            ScenarioConfig::JetCylinder(s) => s.window_size,
            ScenarioConfig::RotatingCylinder(s) => s.window_size,
            ScenarioConfig::PerpendicularFlap(s) => s.window_size,
        }
    }

    pub fn end_time(&self) -> f64 {
        match self {
            ScenarioConfig::JetCylinder(s) => s.end_time,
            ScenarioConfig::RotatingCylinder(s) => s.end_time,
            ScenarioConfig::PerpendicularFlap(s) => s.end_time,
        }
    }

    /// Same scenario with the episode length replaced.
    pub fn with_end_time(&self, end_time: f64) -> Result<Self, ScenarioError> {
        let mut out = self.clone();
        match &mut out {
            ScenarioConfig::JetCylinder(s) => s.end_time = end_time,
            ScenarioConfig::RotatingCylinder(s) => s.end_time = end_time,
            ScenarioConfig::PerpendicularFlap(s) => s.end_time = end_time,
        }
        out.validate()?;
        Ok(out)
    }

    pub fn substeps_per_action(&self) -> usize {
        match self {
            ScenarioConfig::JetCylinder(s) => s.substeps_per_action,
            ScenarioConfig::RotatingCylinder(s) => s.substeps_per_action,
            ScenarioConfig::PerpendicularFlap(s) => s.substeps_per_action,
        }
    }

    /// Control steps per episode.
    pub fn episode_steps(&self) -> usize {
        (self.end_time() / self.window_size()).round() as usize / self.substeps_per_action()
    }

    /// Drag reference of the cylinder scenarios.
    pub fn cd_base(&self) -> Option<f64> {
        match self {
            ScenarioConfig::JetCylinder(s) => Some(s.cd_base),
            ScenarioConfig::RotatingCylinder(s) => Some(s.cd_base),
            ScenarioConfig::PerpendicularFlap(_) => None,
        }
    }

    pub fn coupling_schema(&self) -> CouplingSchema {
        match self {
            ScenarioConfig::JetCylinder(s) => s.coupling_schema(),
            ScenarioConfig::RotatingCylinder(s) => s.coupling_schema(),
            ScenarioConfig::PerpendicularFlap(s) => s.coupling_schema(),
        }
    }

    pub fn solvers(&self) -> Vec<&'static str> {
        match self {
            ScenarioConfig::PerpendicularFlap(_) => vec![names::CHANNEL_FLUID, names::FLAP_SOLID],
            _ => vec![names::WAKE_FLUID],
        }
    }

    /// Executable started by a solver's run script.
    pub fn solver_binary(solver: &str) -> Option<&'static str> {
        match solver {
            names::WAKE_FLUID => Some("flowbridge-wake"),
            names::CHANNEL_FLUID => Some("flowbridge-fluid"),
            names::FLAP_SOLID => Some("flowbridge-solid"),
            _ => None,
        }
    }

    pub fn hooks(&self) -> Box<dyn EnvHooks> {
        match self {
            ScenarioConfig::JetCylinder(s) => Box::new(JetCylinderHooks::new(s.clone())),
            ScenarioConfig::RotatingCylinder(s) => Box::new(RotatingCylinderHooks::new(s.clone())),
            ScenarioConfig::PerpendicularFlap(s) => Box::new(FlapHooks::new(s.clone())),
        }
    }

    pub fn wake_setup(&self) -> Option<WakeSetup> {
        let (wake, g) = match self {
            ScenarioConfig::JetCylinder(s) => (&s.wake, &s.geometry),
            ScenarioConfig::RotatingCylinder(s) => (&s.wake, &s.geometry),
            ScenarioConfig::PerpendicularFlap(_) => return None,
        };
        Some(WakeSetup { params: wake.clone(), center: g.center, diameter: g.diameter })
    }

    pub fn channel_params(&self) -> Option<&ChannelParams> {
        match self {
            ScenarioConfig::PerpendicularFlap(s) => Some(&s.channel),
            _ => None,
        }
    }

    fn options_document(&self) -> serde_json::Value {
        let (read_from, write_to) = match self {
            ScenarioConfig::JetCylinder(_) => (
                serde_json::json!({ names::FORCES: names::FORCES_MESH, names::PROBES: names::PROBES_MESH }),
                serde_json::json!({ names::JET1_MESH: names::VELOCITY, names::JET2_MESH: names::VELOCITY }),
            ),
            ScenarioConfig::RotatingCylinder(_) => (
                serde_json::json!({ names::FORCES: names::FORCES_MESH, names::PROBES: names::PROBES_MESH }),
                serde_json::json!({ names::CYLINDER_MESH: names::VELOCITY }),
            ),
            ScenarioConfig::PerpendicularFlap(_) => (
                serde_json::json!({ names::TIP_DISPLACEMENT: names::TIP_MESH }),
                serde_json::json!({ names::INLET_MESH: names::JET_CENTER }),
            ),
        };
        serde_json::json!({
            "environment": { "name": self.kind().as_str() },
            "physics_simulation_engine": {
                "solvers": self.solvers(),
                "reset_script": RESET_SCRIPT,
                "run_script": RUN_SCRIPT,
            },
            "controller": { "read_from": read_from, "write_to": write_to },
        })
    }
}

/// Paths of a case directory written by [`scaffold`].
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub dir: PathBuf,
    pub env_config: PathBuf,
    pub scenario: PathBuf,
    pub schema: PathBuf,
}

impl Case {
    pub fn at(dir: &Path) -> Case {
        Case {
            dir: dir.to_path_buf(),
            env_config: dir.join(ENV_CONFIG_FILE),
            scenario: dir.join(SCENARIO_FILE),
            schema: dir.join(crate::adapter::DEFAULT_SCHEMA_FILE),
        }
    }

    /// Environment options plus the scenario stored next to them.
    pub fn load(env_config: &Path) -> Result<(EnvOptions, ScenarioConfig), ScenarioError> {
        let options = EnvOptions::from_path(env_config)?;
        let scenario = ScenarioConfig::from_path(&options.base_dir.join(SCENARIO_FILE))?;
        Ok((options, scenario))
    }
}

/// `n` instances of `scenario` sharing one case directory.
pub fn make_vec_env(
    options: &EnvOptions,
    scenario: &ScenarioConfig,
    n: usize,
    engine: Engine,
) -> Result<VecEnv, EnvError> {
    VecEnv::new(n, |i| EnvInstance::new(i, options.clone(), scenario.hooks(), engine.clone()))
}

fn write(path: &Path, text: &str) -> Result<(), ScenarioError> {
    fs::write(path, text).map_err(|e| ScenarioError::Io(path.into(), e))
}

fn write_script(path: &Path, text: &str) -> Result<(), ScenarioError> {
    write(path, text)?;
    fs::set_permissions(path, fs::Permissions::from_mode(0o755)).map_err(|e| ScenarioError::Io(path.into(), e))
}

/// Writes a runnable case for `config` into `dir`: environment options,
/// scenario, coupling schema and one directory per solver holding its
/// parameters and reset/run scripts.
pub fn scaffold(dir: &Path, config: &ScenarioConfig) -> Result<Case, ScenarioError> {
    config.validate()?;
    let case = Case::at(dir);
    fs::create_dir_all(dir).map_err(|e| ScenarioError::Io(dir.into(), e))?;
    let schema = config.coupling_schema().validated()?;
    write(&case.schema, &schema.to_json_pretty())?;
    write(&case.scenario, &config.to_json_pretty())?;
    let options = serde_json::to_string_pretty(&config.options_document()).expect("options serialize");
    write(&case.env_config, &options)?;
    for solver in config.solvers() {
        let sdir = dir.join(solver);
        fs::create_dir_all(&sdir).map_err(|e| ScenarioError::Io(sdir.clone(), e))?;
        write(&sdir.join(SOLVER_PARAMS_FILE), &config.to_json_pretty())?;
        write_script(
            &sdir.join(RESET_SCRIPT),
            "#!/bin/sh\n# The surrogate keeps no files between episodes.\nexit 0\n",
        )?;
        let bin = ScenarioConfig::solver_binary(solver).expect("scenario solvers have binaries");
        write_script(
            &sdir.join(RUN_SCRIPT),
            &format!(
                "#!/bin/sh\n# FLOWBRIDGE_ENDPOINT, FLOWBRIDGE_SCHEMA and FLOWBRIDGE_PARTICIPANT come from the harness.\nexec {bin} --params {SOLVER_PARAMS_FILE}\n"
            ),
        )?;
    }
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_build_schemas() {
        for kind in ScenarioKind::ALL {
            let cfg = ScenarioConfig::default_for(kind);
            cfg.validate().unwrap();
            assert_eq!(cfg.kind(), kind);
            assert_eq!(kind.as_str().parse::<ScenarioKind>().unwrap(), kind);
            let schema = cfg.coupling_schema().validated().unwrap();
            assert_eq!(schema.n_windows() as usize, cfg.episode_steps() * cfg.substeps_per_action());
        }
        assert_eq!(ScenarioConfig::default_for(ScenarioKind::JetCylinder).episode_steps(), 20);
        assert!("vortex".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        for kind in ScenarioKind::ALL {
            let cfg = ScenarioConfig::default_for(kind);
            let back = ScenarioConfig::from_json(&cfg.to_json_pretty()).unwrap();
            assert_eq!(back, cfg);
        }
        let mut v: serde_json::Value =
            serde_json::to_value(ScenarioConfig::default_for(ScenarioKind::PerpendicularFlap)).unwrap();
        v["bogus"] = 1.into();
        assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn cd_base_is_unactuated_mean() {
        let s = JetCylinderScenario::default();
        assert!(s.cd_base > s.wake.cd0 && s.cd_base < s.wake.cd0 + 0.2);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut s = FlapScenario { amplitude: 0.5, ..Default::default() };
        assert!(s.validate().is_err());
        s.amplitude = 0.3;
        s.y_bounds = [0.1, 1.2];
        assert!(s.validate().is_err());
        let j = JetCylinderScenario { q_max: 1e-4, ..Default::default() };
        assert!(j.validate().is_err());
        let j = JetCylinderScenario { substeps_per_action: 30, ..Default::default() };
        assert!(j.validate().is_err());
        let cfg = ScenarioConfig::default_for(ScenarioKind::JetCylinder);
        assert_eq!(cfg.with_end_time(10.0).unwrap().episode_steps(), 100);
        assert!(cfg.with_end_time(0.05).is_err());
    }

    #[test]
    fn scaffold_writes_a_loadable_case() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::default_for(ScenarioKind::PerpendicularFlap);
        let case = scaffold(dir.path(), &cfg).unwrap();
        let (options, back) = Case::load(&case.env_config).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(options.solvers, vec![names::CHANNEL_FLUID, names::FLAP_SOLID]);
        let run = fs::read_to_string(dir.path().join(names::FLAP_SOLID).join(RUN_SCRIPT)).unwrap();
        assert!(run.contains("exec flowbridge-solid --params params.json"));
        assert_eq!(CouplingSchema::from_path(&case.schema).unwrap(), cfg.coupling_schema().validated().unwrap());
    }
}
