//! Hooks for the channel-flow / elastic-flap environment.

use crate::adapter::{BoxSpace, EnvError, EnvHooks, FieldBuffers};
use crate::coupling::{FieldKey, FieldSpec};
use crate::surrogate::names;

use super::FlapScenario;

pub fn flap_reward(x_tip: f64) -> f64 {
    -x_tip * x_tip
}

pub struct FlapHooks {
    cfg: FlapScenario,
}

impl FlapHooks {
    pub fn new(cfg: FlapScenario) -> Self {
        FlapHooks { cfg }
    }

    /// Jet center written to the inlet, clamped to the action bounds.
    pub fn jet_center(&self, y_c: f64) -> f64 {
        y_c.clamp(self.cfg.y_bounds[0], self.cfg.y_bounds[1])
    }

    fn tip(read: &FieldBuffers) -> Result<f64, EnvError> {
        match read.get(&FieldKey::new(names::TIP_DISPLACEMENT, names::TIP_MESH)).map(Vec::as_slice) {
            Some([x]) => Ok(*x),
            Some(v) => Err(EnvError::Hook(format!("TipDisplacement has {} values, expected 1", v.len()))),
            None => Err(EnvError::Hook("missing read field TipDisplacement".into())),
        }
    }
}

impl EnvHooks for FlapHooks {
    fn action_space(&self) -> BoxSpace {
        BoxSpace { low: vec![self.cfg.y_bounds[0]], high: vec![self.cfg.y_bounds[1]] }
    }

    fn observation_space(&self) -> BoxSpace {
        BoxSpace::unbounded(1)
    }

    fn substeps_per_action(&self) -> usize {
        self.cfg.substeps_per_action
    }

    fn get_action(&mut self, action: &[f64], write_fields: &[FieldSpec]) -> Result<FieldBuffers, EnvError> {
        let spec = write_fields
            .iter()
            .find(|f| f.mesh == names::INLET_MESH)
            .ok_or_else(|| EnvError::Hook("no write field on the inlet mesh".into()))?;
        let mut out = FieldBuffers::new();
        out.insert(spec.key(), vec![self.jet_center(action[0])]);
        Ok(out)
    }

    fn get_observation(&mut self, read: &FieldBuffers, _: &[FieldSpec], _: f64) -> Result<Vec<f64>, EnvError> {
        Ok(vec![Self::tip(read)?])
    }

    fn get_reward(&mut self, window_reads: &[FieldBuffers], _: f64) -> Result<f64, EnvError> {
        let last = window_reads.last().ok_or_else(|| EnvError::Hook("no reads for the step".into()))?;
        Ok(flap_reward(Self::tip(last)?))
    }
}
