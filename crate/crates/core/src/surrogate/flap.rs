//! Channel flow with an inlet jet pushing on a one-mode elastic flap.

use serde::{Deserialize, Serialize};

use super::{lerp, steps_per_window, SurrogateError};

/// Divergence guard on the tip displacement (m).
pub const X_LIMIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    #[serde(rename = "H")]
    pub h: f64,
    pub y_flap: f64,
    pub w_j: f64,
    #[serde(rename = "U_max")]
    pub u_max: f64,
    pub c_f: f64,
    pub beta: f64,
    pub m: f64,
    pub c: f64,
    pub k: f64,
    pub solver_dt: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            h: 1.0,
            y_flap: 0.1,
            w_j: 0.9,
            u_max: 15.0,
            c_f: 0.002,
            beta: 0.1,
            m: 1.0,
            c: 2.0,
            k: 100.0,
            solver_dt: 0.001,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let positive = [
            ("H", self.h),
            ("w_j", self.w_j),
            ("U_max", self.u_max),
            ("c_f", self.c_f),
            ("m", self.m),
            ("k", self.k),
            ("solver_dt", self.solver_dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SurrogateError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("c", self.c), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SurrogateError::Params(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(0.0..=self.h).contains(&self.y_flap) {
            return Err(SurrogateError::Params(format!("y_flap {} outside [0, H]", self.y_flap)));
        }
        Ok(())
    }

    /// Deflection of the undamped flap under a constant force `F`.
    pub fn static_deflection(&self, force: f64) -> f64 {
        force / self.k
    }

    pub fn natural_period(&self) -> f64 {
        2.0 * std::f64::consts::PI * (self.m / self.k).sqrt()
    }
}

/// Jet force on the flap for jet center `y_c` and current tip displacement `x`.
pub fn channel_force(y_c: f64, x: f64, p: &ChannelParams) -> f64 {
    let r = (y_c - p.y_flap) / p.w_j;
    p.c_f * p.u_max * p.u_max * (1.0 - r * r).max(0.0) * (1.0 - p.beta * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlapState {
    pub x: f64,
    pub dx: f64,
}

fn flap_rhs(s: FlapState, force: f64, p: &ChannelParams) -> (f64, f64) {
    (s.dx, (force - p.c * s.dx - p.k * s.x) / p.m)
}

/// One RK4 step of `m·ẍ + c·ẋ + k·x = F` with `F` linear over the step.
pub fn flap_rk4_step(s: FlapState, f_start: f64, f_end: f64, dt: f64, p: &ChannelParams) -> FlapState {
    let f_mid = 0.5 * (f_start + f_end);
    let at = |x: f64, dx: f64| FlapState { x, dx };
    let k1 = flap_rhs(s, f_start, p);
    let k2 = flap_rhs(at(s.x + 0.5 * dt * k1.0, s.dx + 0.5 * dt * k1.1), f_mid, p);
    let k3 = flap_rhs(at(s.x + 0.5 * dt * k2.0, s.dx + 0.5 * dt * k2.1), f_mid, p);
    let k4 = flap_rhs(at(s.x + dt * k3.0, s.dx + dt * k3.1), f_end, p);
    at(
        s.x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        s.dx + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

#[derive(Debug, Clone)]
pub struct FlapSolver {
    params: ChannelParams,
    state: FlapState,
    f_prev: f64,
    substeps: usize,
}

impl FlapSolver {
    pub fn new(params: ChannelParams, window_size: f64) -> Result<Self, SurrogateError> {
        params.validate()?;
        let substeps = steps_per_window(window_size, params.solver_dt)?;
        Ok(FlapSolver { params, state: FlapState::default(), f_prev: 0.0, substeps })
    }

    pub fn state(&self) -> FlapState {
        self.state
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// Advances one window with the force ramping from the previous
    /// window's value to `f_end`.
    pub fn advance_window(&mut self, f_end: f64) -> Result<FlapState, SurrogateError> {
        if !f_end.is_finite() {
            return Err(SurrogateError::NonFinite("force".into()));
        }
        let n = self.substeps;
        let mut s = self.state;
        for i in 0..n {
            let fa = lerp(self.f_prev, f_end, i, n);
            let fb = lerp(self.f_prev, f_end, i + 1, n);
            s = flap_rk4_step(s, fa, fb, self.params.solver_dt, &self.params);
        }
        if !(s.x.abs() <= X_LIMIT) || !s.dx.is_finite() {
            return Err(SurrogateError::Diverged(format!("flap displacement x = {}", s.x)));
        }
        self.state = s;
        self.f_prev = f_end;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn force_vanishes_outside_jet() {
        let p = ChannelParams::default();
        assert_eq!(channel_force(p.y_flap + p.w_j, 0.0, &p), 0.0);
        assert_eq!(channel_force(p.y_flap + 2.0 * p.w_j, 0.3, &p), 0.0);
        let full = channel_force(p.y_flap, 0.0, &p);
        assert!((full - p.c_f * 225.0).abs() < 1e-15);
    }

    #[test]
    fn flap_decays_without_force() {
        let p = ChannelParams::default();
        let mut s = FlapSolver::new(p, 0.01).unwrap();
        s.state = FlapState { x: 0.1, dx: 0.0 };
        for _ in 0..2000 {
            s.advance_window(0.0).unwrap();
        }
        assert!(s.state().x.abs() < 1e-6);
    }

    #[test]
    fn params_validation() {
        let p = ChannelParams { y_flap: 1.5, ..Default::default() };
        assert!(p.validate().is_err());
        let p = ChannelParams { c: -1.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p: ChannelParams = serde_json::from_str(
            r#"{"H":1,"y_flap":0.5,"w_j":0.3,"U_max":15,"c_f":0.002,"beta":0.1,"m":1,"c":0.5,"k":40,"solver_dt":0.001}"#,
        )
        .unwrap();
        assert_eq!(p.u_max, 15.0);
        p.validate().unwrap();
    }
}
