//! Van der Pol wake oscillator standing in for the vortex street behind a
//! cylinder.

use serde::{Deserialize, Serialize};

use super::{lerp, steps_per_window, SurrogateError};

/// Divergence guard on the wake amplitude.
pub const Q_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActuationMode {
    /// Synthetic jets; `q_max_ref` is a volumetric flow rate (m³/s).
    Jet,
    /// Cylinder rotation; `q_max_ref` is an angular speed (rad/s).
    Rotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WakeParams {
    pub mu: f64,
    pub omega0: f64,
    pub g: f64,
    pub cd0: f64,
    pub kappa_d: f64,
    pub kappa_l: f64,
    pub solver_dt: f64,
    pub actuation_mode: ActuationMode,
    pub q_max_ref: f64,
    /// Initial wake amplitude. The origin is an equilibrium, so episodes
    /// start on the developed limit cycle instead.
    #[serde(default = "default_q0")]
    pub q0: f64,
    #[serde(default)]
    pub dq0: f64,
}

fn default_q0() -> f64 {
    2.0
}

impl WakeParams {
    pub fn new(actuation_mode: ActuationMode, q_max_ref: f64) -> Self {
        WakeParams {
            mu: 1.0,
            omega0: 2.0 * std::f64::consts::PI,
            g: 10.0,
            cd0: 3.2,
            kappa_d: 0.05,
            kappa_l: 0.3,
            solver_dt: 0.002,
            actuation_mode,
            q_max_ref,
            q0: default_q0(),
            dq0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let positive = [
            ("mu", self.mu),
            ("omega0", self.omega0),
            ("g", self.g),
            ("cd0", self.cd0),
            ("kappa_d", self.kappa_d),
            ("solver_dt", self.solver_dt),
            ("q_max_ref", self.q_max_ref),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SurrogateError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.kappa_l.is_finite() || !self.q0.is_finite() || !self.dq0.is_finite() {
            return Err(SurrogateError::Params("kappa_l, q0 and dq0 must be finite".into()));
        }
        if self.q0.abs() > Q_LIMIT {
            return Err(SurrogateError::Params(format!("|q0| exceeds {Q_LIMIT}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WakeOscillatorState {
    pub q: f64,
    pub dq: f64,
}

/// Right-hand side `(q', dq')` of the forced oscillator.
pub fn vdp_rhs(s: WakeOscillatorState, u: f64, p: &WakeParams) -> (f64, f64) {
    let ddq = p.mu * (1.0 - s.q * s.q) * s.dq - p.omega0 * p.omega0 * s.q + p.g * u;
    (s.dq, ddq)
}

/// One classical RK4 step with the forcing varying linearly from `u_start`
/// to `u_end` over the step.
pub fn rk4_step(s: WakeOscillatorState, u_start: f64, u_end: f64, dt: f64, p: &WakeParams) -> WakeOscillatorState {
    let u_mid = 0.5 * (u_start + u_end);
    let at = |q: f64, dq: f64| WakeOscillatorState { q, dq };
    let k1 = vdp_rhs(s, u_start, p);
    let k2 = vdp_rhs(at(s.q + 0.5 * dt * k1.0, s.dq + 0.5 * dt * k1.1), u_mid, p);
    let k3 = vdp_rhs(at(s.q + 0.5 * dt * k2.0, s.dq + 0.5 * dt * k2.1), u_mid, p);
    let k4 = vdp_rhs(at(s.q + dt * k3.0, s.dq + dt * k3.1), u_end, p);
    at(
        s.q + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        s.dq + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Drag and lift coefficients `(Cd, Cl)`.
pub fn forces(s: WakeOscillatorState, p: &WakeParams) -> (f64, f64) {
    (p.cd0 + p.kappa_d * s.q * s.q, p.kappa_l * s.q)
}

/// Probe signals `q·e^{−d/D} + dq·e^{−2d/D}` with `d` the distance from
/// the cylinder center.
pub fn probe_signals(s: WakeOscillatorState, probes: &[[f64; 2]], center: [f64; 2], diameter: f64) -> Vec<f64> {
    probes
        .iter()
        .map(|p| {
            let d = (p[0] - center[0]).hypot(p[1] - center[1]);
            s.q * (-d / diameter).exp() + s.dq * (-2.0 * d / diameter).exp()
        })
        .collect()
}

/// Integrates the oscillator one coupling window at a time.
#[derive(Debug, Clone)]
pub struct WakeSolver {
    params: WakeParams,
    state: WakeOscillatorState,
    u_prev: f64,
    substeps: usize,
}

impl WakeSolver {
    pub fn new(params: WakeParams, window_size: f64) -> Result<Self, SurrogateError> {
        params.validate()?;
        let substeps = steps_per_window(window_size, params.solver_dt)?;
        let state = WakeOscillatorState { q: params.q0, dq: params.dq0 };
        Ok(WakeSolver { params, state, u_prev: 0.0, substeps })
    }

    pub fn params(&self) -> &WakeParams {
        &self.params
    }

    pub fn state(&self) -> WakeOscillatorState {
        self.state
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Actuation at the end of the last completed window.
    pub fn actuation(&self) -> f64 {
        self.u_prev
    }

    /// Advances one window with the actuation ramping from the previous
    /// window's value to `u_end`.
    pub fn advance_window(&mut self, u_end: f64) -> Result<WakeOscillatorState, SurrogateError> {
        if !u_end.is_finite() {
            return Err(SurrogateError::NonFinite("actuation".into()));
        }
        let n = self.substeps;
        let h = self.params.solver_dt;
        let mut s = self.state;
        for i in 0..n {
            let ua = lerp(self.u_prev, u_end, i, n);
            let ub = lerp(self.u_prev, u_end, i + 1, n);
            s = rk4_step(s, ua, ub, h, &self.params);
        }
        if !(s.q.abs() <= Q_LIMIT) || !s.dq.is_finite() {
            return Err(SurrogateError::Diverged(format!("wake amplitude q = {}", s.q)));
        }
        self.state = s;
        self.u_prev = u_end;
        Ok(s)
    }

    pub fn forces(&self) -> (f64, f64) {
        forces(self.state, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> WakeParams {
        WakeParams::new(ActuationMode::Jet, 2.5e-4)
    }

    fn st(q: f64, dq: f64) -> WakeOscillatorState {
        WakeOscillatorState { q, dq }
    }

    #[test]
    fn rhs_examples() {
        let p = params();
        assert_eq!(vdp_rhs(st(0.0, 0.0), 0.0, &p), (0.0, 0.0));
        let (_, ddq) = vdp_rhs(st(1.0, 0.0), 0.0, &p);
        assert!((ddq + 4.0 * PI * PI).abs() < 1e-12);
        let s = st(0.3, -1.2);
        assert_eq!(vdp_rhs(s, 1.0, &p).1 - vdp_rhs(s, 0.0, &p).1, p.g);
    }

    #[test]
    fn forces_examples() {
        let p = params();
        assert_eq!(forces(st(0.0, 1.0), &p), (3.2, 0.0));
        let (cd, cl) = forces(st(2.0, 0.0), &p);
        assert!((cd - 3.4).abs() < 1e-12 && (cl - 0.6).abs() < 1e-12);
        let (cdn, cln) = forces(st(-2.0, 0.0), &p);
        assert_eq!((cdn, cln), (cd, -cl));
    }

    #[test]
    fn probe_examples() {
        let c = [0.2, 0.2];
        let probes = [[0.2, 0.2], [0.3, 0.2], [0.2, 0.1]];
        assert_eq!(probe_signals(st(0.0, 0.0), &probes, c, 0.1), vec![0.0; 3]);
        let p = probe_signals(st(0.7, 0.4), &probes, c, 0.1);
        assert!((p[0] - 1.1).abs() < 1e-15);
        let p = probe_signals(st(1.0, 0.0), &probes, c, 0.1);
        assert!((p[1] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((p[2] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_preserved() {
        assert_eq!(rk4_step(st(0.0, 0.0), 0.0, 0.0, 0.01, &params()), st(0.0, 0.0));
    }

    #[test]
    fn divergence_aborts() {
        let mut p = params();
        p.q0 = 9.99;
        p.dq0 = 500.0;
        let mut s = WakeSolver::new(p, 0.002).unwrap();
        assert!(matches!(s.advance_window(0.0), Err(SurrogateError::Diverged(_))));
        let mut s = WakeSolver::new(params(), 0.002).unwrap();
        assert!(matches!(s.advance_window(f64::NAN), Err(SurrogateError::NonFinite(_))));
    }

    #[test]
    fn window_must_be_multiple_of_solver_dt() {
        assert!(WakeSolver::new(params(), 0.003).is_err());
        assert_eq!(WakeSolver::new(params(), 0.01).unwrap().substeps(), 5);
    }
}
