//! Hooks for the two actuated-cylinder environments.

use crate::adapter::{BoxSpace, EnvError, EnvHooks, FieldBuffers};
use crate::coupling::{FieldKey, FieldSpec};
use crate::surrogate::names;

use super::geometry::ArcMesh;
use super::{JetCylinderScenario, RotatingCylinderScenario};

/// Normal speeds with a parabolic profile over `xi`, scaled so that the
/// discrete flux `Σ v_i·w_i` equals `rate`.
pub fn jet_profile(rate: f64, xi: &[f64], weights: &[f64]) -> Result<Vec<f64>, EnvError> {
    if xi.len() != weights.len() || weights.is_empty() {
        return Err(EnvError::Action("jet mesh needs one weight per vertex".into()));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(EnvError::Action("degenerate jet mesh: all face weights are zero".into()));
    }
    let mut shape: Vec<f64> = xi.iter().map(|x| 1.0 - x * x).collect();
    let mut flux: f64 = shape.iter().zip(weights).map(|(s, w)| s * w).sum();
    if flux == 0.0 {
        // Only the arc endpoints carry weight; fall back to a flat profile.
        shape = vec![1.0; xi.len()];
        flux = weights.iter().sum();
    }
    let peak = rate / flux;
    Ok(shape.iter().map(|s| peak * s).collect())
}

/// Velocity vectors (flattened xy) for a jet blowing `rate` along `normals`.
pub fn jet_velocity(rate: f64, mesh: &ArcMesh, normals: &[[f64; 2]]) -> Result<Vec<f64>, EnvError> {
    let speeds = jet_profile(rate, &mesh.xi, &mesh.weights)?;
    Ok(speeds.iter().zip(normals).flat_map(|(v, n)| [v * n[0], v * n[1]]).collect())
}

/// Rigid rotation `v = ω × (p − c)` at every vertex, ω clamped to
/// `[−omega_max, omega_max]`.
pub fn rot_velocity(omega: f64, omega_max: f64, vertices: &[[f64; 2]], center: [f64; 2]) -> Result<Vec<f64>, EnvError> {
    let w = omega.clamp(-omega_max, omega_max);
    let mut out = Vec::with_capacity(2 * vertices.len());
    for p in vertices {
        let d = [p[0] - center[0], p[1] - center[1]];
        if d[0] == 0.0 && d[1] == 0.0 {
            return Err(EnvError::Action("cylinder vertex at the rotation center".into()));
        }
        out.push(-w * d[1]);
        out.push(w * d[0]);
    }
    Ok(out)
}

/// `(Cd_base − ⟨Cd⟩) − λ·|⟨Cl⟩|` over per-window `(Cd, Cl)` samples.
pub fn cylinder_reward(samples: &[(f64, f64)], cd_base: f64, lift_penalty: f64) -> Result<f64, EnvError> {
    if samples.is_empty() {
        return Err(EnvError::Hook("no force samples for the step".into()));
    }
    let n = samples.len() as f64;
    let cd = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let cl = samples.iter().map(|s| s.1).sum::<f64>() / n;
    Ok((cd_base - cd) - lift_penalty * cl.abs())
}

fn forces_of(reads: &FieldBuffers) -> Result<(f64, f64), EnvError> {
    match reads.get(&FieldKey::new(names::FORCES, names::FORCES_MESH)).map(Vec::as_slice) {
        Some([cd, cl]) => Ok((*cd, *cl)),
        Some(v) => Err(EnvError::Hook(format!("Forces buffer has {} values, expected 2", v.len()))),
        None => Err(EnvError::Hook("missing read field Forces".into())),
    }
}

fn probes_of(reads: &FieldBuffers, n_probes: usize) -> Result<Vec<f64>, EnvError> {
    let p = reads
        .get(&FieldKey::new(names::PROBES, names::PROBES_MESH))
        .ok_or_else(|| EnvError::Hook("missing read field Probes".into()))?;
    if p.len() != n_probes {
        return Err(EnvError::Hook(format!("Probes buffer has {} values, expected {n_probes}", p.len())));
    }
    Ok(p.clone())
}

fn put(out: &mut FieldBuffers, write_fields: &[FieldSpec], mesh: &str, values: Vec<f64>) -> Result<(), EnvError> {
    let spec = write_fields
        .iter()
        .find(|f| f.mesh == mesh)
        .ok_or_else(|| EnvError::Hook(format!("no write field on mesh '{mesh}'")))?;
    out.insert(spec.key(), values);
    Ok(())
}

/// Zero-net synthetic jets on the cylinder poles.
pub struct JetCylinderHooks {
    cfg: JetCylinderScenario,
    jet1: ArcMesh,
    jet2: ArcMesh,
    normals1: Vec<[f64; 2]>,
    normals2: Vec<[f64; 2]>,
}

impl JetCylinderHooks {
    pub fn new(cfg: JetCylinderScenario) -> Self {
        let (jet1, jet2) = cfg.jet_meshes();
        let normals1 = jet1.normals(cfg.geometry.center);
        let normals2 = jet2.normals(cfg.geometry.center);
        JetCylinderHooks { cfg, jet1, jet2, normals1, normals2 }
    }

    /// Velocity buffers for both jets: jet1 carries `+a`, jet2 `−a`, with
    /// `a` clamped to `[−Q_max, Q_max]`.
    pub fn jet_buffers(&self, a: f64) -> Result<(Vec<f64>, Vec<f64>), EnvError> {
        let a = a.clamp(-self.cfg.q_max, self.cfg.q_max);
        Ok((jet_velocity(a, &self.jet1, &self.normals1)?, jet_velocity(-a, &self.jet2, &self.normals2)?))
    }
}

impl EnvHooks for JetCylinderHooks {
    fn action_space(&self) -> BoxSpace {
        BoxSpace { low: vec![-self.cfg.q_max], high: vec![self.cfg.q_max] }
    }

    fn observation_space(&self) -> BoxSpace {
        BoxSpace::unbounded(self.cfg.geometry.n_probes)
    }

    fn substeps_per_action(&self) -> usize {
        self.cfg.substeps_per_action
    }

    fn interface_vertices(&self) -> Vec<(String, Vec<Vec<f64>>)> {
        vec![(names::JET1_MESH.into(), self.jet1.coords()), (names::JET2_MESH.into(), self.jet2.coords())]
    }

    fn get_action(&mut self, action: &[f64], write_fields: &[FieldSpec]) -> Result<FieldBuffers, EnvError> {
        let (v1, v2) = self.jet_buffers(action[0])?;
        let mut out = FieldBuffers::new();
        put(&mut out, write_fields, names::JET1_MESH, v1)?;
        put(&mut out, write_fields, names::JET2_MESH, v2)?;
        Ok(out)
    }

    fn get_observation(&mut self, read: &FieldBuffers, _: &[FieldSpec], _: f64) -> Result<Vec<f64>, EnvError> {
        probes_of(read, self.cfg.geometry.n_probes)
    }

    fn get_reward(&mut self, window_reads: &[FieldBuffers], _: f64) -> Result<f64, EnvError> {
        let samples = window_reads.iter().map(forces_of).collect::<Result<Vec<_>, _>>()?;
        cylinder_reward(&samples, self.cfg.cd_base, self.cfg.lift_penalty)
    }
}

/// Cylinder spinning about its axis.
pub struct RotatingCylinderHooks {
    cfg: RotatingCylinderScenario,
    surface: ArcMesh,
}

impl RotatingCylinderHooks {
    pub fn new(cfg: RotatingCylinderScenario) -> Self {
        let surface = cfg.surface_mesh();
        RotatingCylinderHooks { cfg, surface }
    }
}

impl EnvHooks for RotatingCylinderHooks {
    fn action_space(&self) -> BoxSpace {
        BoxSpace { low: vec![-self.cfg.omega_max], high: vec![self.cfg.omega_max] }
    }

    fn observation_space(&self) -> BoxSpace {
        BoxSpace::unbounded(self.cfg.geometry.n_probes)
    }

    fn substeps_per_action(&self) -> usize {
        self.cfg.substeps_per_action
    }

    fn interface_vertices(&self) -> Vec<(String, Vec<Vec<f64>>)> {
        vec![(names::CYLINDER_MESH.into(), self.surface.coords())]
    }

    fn get_action(&mut self, action: &[f64], write_fields: &[FieldSpec]) -> Result<FieldBuffers, EnvError> {
        let v = rot_velocity(action[0], self.cfg.omega_max, &self.surface.vertices, self.cfg.geometry.center)?;
        let mut out = FieldBuffers::new();
        put(&mut out, write_fields, names::CYLINDER_MESH, v)?;
        Ok(out)
    }

    fn get_observation(&mut self, read: &FieldBuffers, _: &[FieldSpec], _: f64) -> Result<Vec<f64>, EnvError> {
        probes_of(read, self.cfg.geometry.n_probes)
    }

    fn get_reward(&mut self, window_reads: &[FieldBuffers], _: f64) -> Result<f64, EnvError> {
        let samples = window_reads.iter().map(forces_of).collect::<Result<Vec<_>, _>>()?;
        cylinder_reward(&samples, self.cfg.cd_base, self.cfg.lift_penalty)
    }
}
