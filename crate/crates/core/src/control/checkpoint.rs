//! Policy checkpoints: `FBCK`, a little-endian u32 header length, a JSON
//! header, then every parameter as a little-endian f64.

use std::fs;
use std::path::Path;

use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::policy::{PolicyParams, PolicyShape};
use super::ppo::PpoConfig;
use super::ControlError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FBCK";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub scenario: String,
    pub shape: PolicyShape,
    pub n_params: usize,
    pub config: PpoConfig,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub rng: Pcg64,
    pub updates: usize,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(header: CheckpointHeader, policy: &PolicyParams) -> Self {
        Checkpoint {
            header: CheckpointHeader { n_params: policy.params.len(), ..header },
            params: policy.params.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ControlError> {
        let bad = |m: &str| ControlError::Checkpoint(m.to_owned());
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| ControlError::Checkpoint(format!("bad header: {e}")))?;
        if header.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(bad("unsupported checkpoint version"));
        }
        let data = &bytes[8 + hlen..];
        if data.len() != 8 * header.n_params || header.n_params != header.shape.n_params() {
            return Err(bad("parameter block does not match the header"));
        }
        let params = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), ControlError> {
        fs::write(path, self.to_bytes()).map_err(ControlError::Io)
    }

    pub fn load(path: &Path) -> Result<Self, ControlError> {
        Self::from_bytes(&fs::read(path).map_err(ControlError::Io)?)
    }

    pub fn policy(&self) -> Result<PolicyParams, ControlError> {
        PolicyParams::from_flat(self.header.shape.clone(), self.params.clone())
    }
}
