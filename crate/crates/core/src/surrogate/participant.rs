//! Solver main loops over an established coupling session.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingError, CouplingSession};

use super::actuation::ActuationGeometry;
use super::flap::{channel_force, ChannelParams, FlapSolver};
use super::wake::{probe_signals, ActuationMode, WakeParams, WakeSolver};
use super::{names, SurrogateError};

/// How a solver loop ended without error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticipantExit {
    /// Ran every window of the episode.
    Completed,
    /// A peer ended the coupling early.
    PeerFinalized,
}

/// Everything the wake solver needs beyond the coupling schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WakeSetup {
    pub params: WakeParams,
    pub center: [f64; 2],
    pub diameter: f64,
}

impl WakeSetup {
    pub fn actuation_mesh(&self) -> &'static str {
        match self.params.actuation_mode {
            ActuationMode::Jet => names::JET1_MESH,
            ActuationMode::Rotation => names::CYLINDER_MESH,
        }
    }
}

fn finish(session: &mut CouplingSession, res: Result<(), SurrogateError>) -> Result<ParticipantExit, SurrogateError> {
    match res {
        Ok(()) => {
            session.finalize();
            Ok(ParticipantExit::Completed)
        }
        Err(SurrogateError::Coupling(CouplingError::PeerFinalized { peer })) => {
            info!("{}: '{peer}' finalized the coupling", session.participant());
            Ok(ParticipantExit::PeerFinalized)
        }
        Err(e @ SurrogateError::Coupling(_)) => Err(e),
        Err(e) => {
            session.abort(&e.to_string());
            Err(e)
        }
    }
}

fn scalar(session: &CouplingSession, field: &str, mesh: &str) -> Result<f64, SurrogateError> {
    let v = session.read_field(field, mesh)?[0];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SurrogateError::NonFinite(format!("{field}@{mesh}")))
    }
}

/// Wake oscillator participant: reads the actuation velocity field, writes
/// `Forces` (Cd, Cl) and `Probes` every window.
pub fn run_wake(session: &mut CouplingSession, setup: &WakeSetup) -> Result<ParticipantExit, SurrogateError> {
    let res = wake_loop(session, setup);
    finish(session, res)
}

fn wake_loop(session: &mut CouplingSession, setup: &WakeSetup) -> Result<(), SurrogateError> {
    let schema = session.schema().clone();
    let act_mesh = setup.actuation_mesh();
    let mesh = schema.mesh(act_mesh).ok_or_else(|| CouplingError::UnknownMesh(act_mesh.into()))?;
    let geometry = ActuationGeometry::new(setup.params.actuation_mode, mesh, setup.center)?;
    let probes: Vec<[f64; 2]> = schema
        .mesh(names::PROBES_MESH)
        .ok_or_else(|| CouplingError::UnknownMesh(names::PROBES_MESH.into()))?
        .vertices
        .iter()
        .map(|v| [v[0], v[1]])
        .collect();
    let ws = session.window_size();
    let mut solver = WakeSolver::new(setup.params.clone(), ws)?;

    session.initialize()?;
    while session.is_coupling_ongoing()? {
        let velocity = session.read_field(names::VELOCITY, act_mesh)?;
        let u = geometry.net_actuation(velocity, setup.params.q_max_ref)?;
        let state = solver.advance_window(u)?;
        let (cd, cl) = solver.forces();
        session.write_field(names::FORCES, names::FORCES_MESH, &[cd, cl])?;
        let p = probe_signals(state, &probes, setup.center, setup.diameter);
        session.write_field(names::PROBES, names::PROBES_MESH, &p)?;
        debug!("window {}: u={u} q={} dq={}", session.window_index(), state.q, state.dq);
        session.advance(ws)?;
    }
    Ok(())
}

/// Channel fluid participant: turns the jet position and the flap
/// displacement into a force on the flap.
pub fn run_channel_fluid(
    session: &mut CouplingSession,
    params: &ChannelParams,
) -> Result<ParticipantExit, SurrogateError> {
    let res = fluid_loop(session, params);
    finish(session, res)
}

fn fluid_loop(session: &mut CouplingSession, params: &ChannelParams) -> Result<(), SurrogateError> {
    params.validate()?;
    let ws = session.window_size();
    session.initialize()?;
    while session.is_coupling_ongoing()? {
        let y_c = scalar(session, names::JET_CENTER, names::INLET_MESH)?;
        let x = scalar(session, names::DISPLACEMENT, names::FLAP_MESH)?;
        let force = channel_force(y_c, x, params);
        session.write_field(names::FORCE, names::FLAP_MESH, &[force])?;
        session.write_field(names::TIP_DISPLACEMENT, names::TIP_MESH, &[x])?;
        session.advance(ws)?;
    }
    Ok(())
}

/// Flap solid participant: integrates the modal oscillator under the
/// fluid force.
pub fn run_flap_solid(
    session: &mut CouplingSession,
    params: &ChannelParams,
) -> Result<ParticipantExit, SurrogateError> {
    let res = solid_loop(session, params);
    finish(session, res)
}

fn solid_loop(session: &mut CouplingSession, params: &ChannelParams) -> Result<(), SurrogateError> {
    let ws = session.window_size();
    let mut solver = FlapSolver::new(params.clone(), ws)?;
    session.initialize()?;
    while session.is_coupling_ongoing()? {
        let force = scalar(session, names::FORCE, names::FLAP_MESH)?;
        let state = solver.advance_window(force)?;
        session.write_field(names::DISPLACEMENT, names::FLAP_MESH, &[state.x])?;
        session.advance(ws)?;
    }
    Ok(())
}
