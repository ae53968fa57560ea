use std::collections::BTreeMap;

use crate::coupling::{FieldKey, FieldSpec};

use super::{BoxSpace, EnvError};

/// Field buffers keyed by `(field, mesh)`.
pub type FieldBuffers = BTreeMap<FieldKey, Vec<f64>>;

/// Problem-specific part of an environment. Hooks may keep private state
/// but never touch the coupling session themselves.
pub trait EnvHooks: Send {
    fn action_space(&self) -> BoxSpace;
    fn observation_space(&self) -> BoxSpace;

    /// Coupling windows per environment step (the action is ramped
    /// linearly across them).
    fn substeps_per_action(&self) -> usize;

    /// Mesh coordinates the controller registers before the handshake, so
    /// that its view of the interfaces is checked against the solvers'.
    fn interface_vertices(&self) -> Vec<(String, Vec<Vec<f64>>)> {
        Vec::new()
    }

    fn on_reset(&mut self, _seed: Option<u64>) {}

    /// Maps an action to a buffer for every field in `write_fields`.
    fn get_action(&mut self, action: &[f64], write_fields: &[FieldSpec]) -> Result<FieldBuffers, EnvError>;

    fn get_observation(&mut self, read: &FieldBuffers, read_fields: &[FieldSpec], t: f64)
        -> Result<Vec<f64>, EnvError>;

    /// `window_reads` holds the read buffers after each window of the step.
    fn get_reward(&mut self, window_reads: &[FieldBuffers], t: f64) -> Result<f64, EnvError>;

    fn close_external_resources(&mut self) {}
}
