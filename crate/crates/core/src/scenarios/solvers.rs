use crate::adapter::InProcessSolvers;
use crate::coupling::CouplingSession;
use crate::surrogate::{names, run_channel_fluid, run_flap_solid, run_wake};

use super::ScenarioConfig;

/// Runs a scenario's solver participants on threads.
#[derive(Debug, Clone)]
pub struct ScenarioSolvers(pub ScenarioConfig);

impl InProcessSolvers for ScenarioSolvers {
    fn run(&self, participant: &str, session: &mut CouplingSession) -> Result<(), String> {
        let res = match participant {
            names::WAKE_FLUID => {
                let setup = self.0.wake_setup().ok_or("scenario has no wake solver")?;
                run_wake(session, &setup)
            }
            names::CHANNEL_FLUID => {
                let p = self.0.channel_params().ok_or("scenario has no channel solver")?;
                run_channel_fluid(session, p)
            }
            names::FLAP_SOLID => {
                let p = self.0.channel_params().ok_or("scenario has no flap solver")?;
                run_flap_solid(session, p)
            }
            other => return Err(format!("no in-process solver for participant '{other}'")),
        };
        res.map(|_| ()).map_err(|e| e.to_string())
    }
}
