//! Desk-scale physics participants: a wake oscillator behind an actuated
//! cylinder and a channel/flap pair.

mod actuation;
mod flap;
mod participant;
mod wake;

pub use actuation::ActuationGeometry;
pub use flap::{channel_force, flap_rk4_step, ChannelParams, FlapSolver, FlapState, X_LIMIT};
pub use participant::{run_channel_fluid, run_flap_solid, run_wake, ParticipantExit, WakeSetup};
pub use wake::{
    forces, probe_signals, rk4_step, vdp_rhs, ActuationMode, WakeOscillatorState, WakeParams, WakeSolver, Q_LIMIT,
};

use crate::coupling::CouplingError;

/// Participant, mesh and field names shared by the solvers and the
/// environments driving them.
pub mod names {
    pub const CONTROLLER: &str = "controller";
    pub const WAKE_FLUID: &str = "fluid-wake";
    pub const CHANNEL_FLUID: &str = "fluid-channel";
    pub const FLAP_SOLID: &str = "solid-flap";

    pub const JET1_MESH: &str = "jet1";
    pub const JET2_MESH: &str = "jet2";
    pub const CYLINDER_MESH: &str = "cylinder";
    pub const FORCES_MESH: &str = "forces";
    pub const PROBES_MESH: &str = "probes";
    pub const INLET_MESH: &str = "inlet";
    pub const TIP_MESH: &str = "flap-tip";
    pub const FLAP_MESH: &str = "flap";

    pub const VELOCITY: &str = "Velocity";
    pub const FORCES: &str = "Forces";
    pub const PROBES: &str = "Probes";
    pub const JET_CENTER: &str = "JetCenter";
    pub const TIP_DISPLACEMENT: &str = "TipDisplacement";
    pub const FORCE: &str = "Force";
    pub const DISPLACEMENT: &str = "Displacement";
}

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// Number of solver steps per coupling window; `solver_dt` must divide the
/// window within 1e-9 relative.
pub fn steps_per_window(window_size: f64, solver_dt: f64) -> Result<usize, SurrogateError> {
    let ratio = window_size / solver_dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
        return Err(SurrogateError::Params(format!("solver_dt {solver_dt} does not divide window size {window_size}")));
    }
    Ok(n as usize)
}

/// Value at step `i` of `n` on the line from `a` to `b`; exact at both ends.
pub(crate) fn lerp(a: f64, b: f64, i: usize, n: usize) -> f64 {
    if i == n {
        b
    } else {
        a + (b - a) * (i as f64 / n as f64)
    }
}
