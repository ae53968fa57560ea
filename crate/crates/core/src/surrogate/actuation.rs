use crate::coupling::CouplingMesh;

use super::wake::ActuationMode;
use super::SurrogateError;

/// Precomputed quadrature for recovering the normalized actuation `u` from
/// a velocity field on the actuation mesh.
#[derive(Debug, Clone)]
pub enum ActuationGeometry {
    /// Outward unit normals and face weights of the first jet.
    Jet { normals: Vec<[f64; 2]>, weights: Vec<f64> },
    /// Vertex offsets from the cylinder center and their squared radii.
    Rotation { offsets: Vec<[f64; 2]>, r2: Vec<f64> },
}

impl ActuationGeometry {
    pub fn new(mode: ActuationMode, mesh: &CouplingMesh, center: [f64; 2]) -> Result<Self, SurrogateError> {
        if mesh.dim != 2 {
            return Err(SurrogateError::Geometry(format!("mesh '{}' must be 2-dimensional", mesh.name)));
        }
        let mut offsets = Vec::with_capacity(mesh.vertex_count());
        let mut r2 = Vec::with_capacity(mesh.vertex_count());
        for v in &mesh.vertices {
            let d = [v[0] - center[0], v[1] - center[1]];
            let rr = d[0] * d[0] + d[1] * d[1];
            if rr == 0.0 {
                return Err(SurrogateError::Geometry(format!(
                    "mesh '{}' has a vertex at the cylinder center",
                    mesh.name
                )));
            }
            offsets.push(d);
            r2.push(rr);
        }
        Ok(match mode {
            ActuationMode::Jet => {
                if mesh.face_weights.iter().all(|&w| w == 0.0) {
                    return Err(SurrogateError::Geometry(format!("mesh '{}' has zero total weight", mesh.name)));
                }
                let normals = offsets
                    .iter()
                    .zip(&r2)
                    .map(|(d, rr)| {
                        let r = rr.sqrt();
                        [d[0] / r, d[1] / r]
                    })
                    .collect();
                ActuationGeometry::Jet { normals, weights: mesh.face_weights.clone() }
            }
            ActuationMode::Rotation => ActuationGeometry::Rotation { offsets, r2 },
        })
    }

    fn vertex_count(&self) -> usize {
        match self {
            ActuationGeometry::Jet { weights, .. } => weights.len(),
            ActuationGeometry::Rotation { r2, .. } => r2.len(),
        }
    }

    /// Raw actuation: net flux through the jet (m³/s) or mean angular
    /// speed of the surface (rad/s).
    pub fn measure(&self, velocity: &[f64]) -> Result<f64, SurrogateError> {
        if velocity.len() != 2 * self.vertex_count() {
            return Err(SurrogateError::Geometry(format!(
                "velocity buffer has {} values for {} vertices",
                velocity.len(),
                self.vertex_count()
            )));
        }
        if velocity.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFinite("velocity".into()));
        }
        let vel = velocity.chunks_exact(2);
        Ok(match self {
            ActuationGeometry::Jet { normals, weights } => {
                vel.zip(normals).zip(weights).map(|((v, n), w)| (v[0] * n[0] + v[1] * n[1]) * w).sum()
            }
            ActuationGeometry::Rotation { offsets, r2 } => {
                let total: f64 = vel.zip(offsets).zip(r2).map(|((v, d), rr)| (v[1] * d[0] - v[0] * d[1]) / rr).sum();
                total / r2.len() as f64
            }
        })
    }

    /// Normalized actuation `u ∈ [−1, 1]`.
    pub fn net_actuation(&self, velocity: &[f64], q_max_ref: f64) -> Result<f64, SurrogateError> {
        Ok((self.measure(velocity)? / q_max_ref).clamp(-1.0, 1.0))
    }
}
