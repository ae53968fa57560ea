//! Decision-making side: a PPO agent with a Gaussian MLP policy and an
//! open-loop sinusoidal controller.

mod checkpoint;
mod gae;
mod mlp;
mod policy;
mod ppo;
pub mod rng;
mod sine;
mod train;

pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC};
pub use gae::{gae, normalize_advantages};
pub use mlp::{MlpCache, MlpShape};
pub use policy::{gaussian_entropy, gaussian_log_prob, sample, PolicyParams, PolicyShape, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{backprop, clipped_objective, ppo_loss, Adam, Batch, LossCoefs, LossDiagnostics, PpoConfig};
pub use sine::SineController;
pub use train::{to_env_action, EpisodeRecord, TrainObserver, Trainer, TrainingLog, UpdateRecord};

use crate::adapter::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("i/o error: {0}")]
    Io(std::io::Error),
}
