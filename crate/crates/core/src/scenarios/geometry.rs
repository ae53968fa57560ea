//! Cylinder interface meshes and probe layout.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderGeometry {
    /// Cylinder diameter D (m).
    pub diameter: f64,
    pub center: [f64; 2],
    pub n_probes: usize,
    /// Probe `j` of `n` sits at angle `−span/2 + span·j/(n−1)` from the
    /// downstream axis and at a radius growing linearly from
    /// `probe_radius_min·D` to `probe_radius_max·D`.
    pub probe_radius_min: f64,
    pub probe_radius_max: f64,
    pub probe_span_deg: f64,
}

impl Default for CylinderGeometry {
    fn default() -> Self {
        CylinderGeometry {
            diameter: 0.1,
            center: [0.2, 0.2],
            n_probes: 11,
            probe_radius_min: 1.0,
            probe_radius_max: 3.0,
            probe_span_deg: 120.0,
        }
    }
}

fn frac(j: usize, n: usize) -> f64 {
    if n <= 1 {
        0.5
    } else {
        j as f64 / (n - 1) as f64
    }
}

impl CylinderGeometry {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.diameter > 0.0) || self.center.iter().any(|c| !c.is_finite()) {
            return Err(ScenarioError::Config("diameter must be positive and center finite".into()));
        }
        if self.n_probes == 0 {
            return Err(ScenarioError::Config("n_probes must be at least 1".into()));
        }
        if !(self.probe_radius_min > 0.5 && self.probe_radius_max >= self.probe_radius_min) {
            return Err(ScenarioError::Config("probe radii must lie outside the cylinder and be ordered".into()));
        }
        if !(0.0..=360.0).contains(&self.probe_span_deg) {
            return Err(ScenarioError::Config("probe_span_deg must lie in [0, 360]".into()));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn probes(&self) -> Vec<[f64; 2]> {
        let n = self.n_probes;
        (0..n)
            .map(|j| {
                let f = if n == 1 { 0.0 } else { frac(j, n) };
                let angle = (-0.5 * self.probe_span_deg + self.probe_span_deg * f).to_radians();
                let r = self.diameter * (self.probe_radius_min + (self.probe_radius_max - self.probe_radius_min) * f);
                [self.center[0] + r * angle.cos(), self.center[1] + r * angle.sin()]
            })
            .collect()
    }

    /// Point on the surface at polar angle `deg`.
    pub fn surface_point(&self, deg: f64) -> [f64; 2] {
        let a = deg.to_radians();
        [self.center[0] + self.radius() * a.cos(), self.center[1] + self.radius() * a.sin()]
    }

    /// `n` equally spaced surface vertices, each weighted by its share of
    /// the circumference.
    pub fn surface_ring(&self, n: usize) -> ArcMesh {
        let vertices = (0..n).map(|i| self.surface_point(360.0 * i as f64 / n as f64)).collect();
        let w = 2.0 * PI * self.radius() / n as f64;
        ArcMesh { vertices, weights: vec![w; n], xi: vec![0.0; n] }
    }

    /// `n` vertices spanning a `width_deg` arc centered at `center_deg`,
    /// weighted by the arc-length midpoint rule.
    pub fn jet_arc(&self, center_deg: f64, width_deg: f64, n: usize) -> ArcMesh {
        let step = if n > 1 { width_deg / (n - 1) as f64 } else { width_deg };
        let seg = self.radius() * step.to_radians();
        let mut vertices = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut xi = Vec::with_capacity(n);
        for i in 0..n {
            let f = frac(i, n);
            vertices.push(self.surface_point(center_deg - 0.5 * width_deg + width_deg * f));
            xi.push(if n > 1 { 2.0 * f - 1.0 } else { 0.0 });
            let ends = n > 1 && (i == 0 || i + 1 == n);
            weights.push(if ends { 0.5 * seg } else { seg });
        }
        ArcMesh { vertices, weights, xi }
    }
}

/// Vertices on the cylinder surface with quadrature weights and their
/// normalized position `ξ ∈ [−1, 1]` across the arc.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcMesh {
    pub vertices: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub xi: Vec<f64>,
}

impl ArcMesh {
    pub fn coords(&self) -> Vec<Vec<f64>> {
        self.vertices.iter().map(|v| v.to_vec()).collect()
    }

    /// Outward unit normals about `center`.
    pub fn normals(&self, center: [f64; 2]) -> Vec<[f64; 2]> {
        self.vertices
            .iter()
            .map(|v| {
                let d = [v[0] - center[0], v[1] - center[1]];
                let r = d[0].hypot(d[1]);
                [d[0] / r, d[1] / r]
            })
            .collect()
    }
}
