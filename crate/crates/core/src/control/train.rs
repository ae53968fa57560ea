use log::info;
use rand::seq::SliceRandom;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::adapter::{BoxSpace, VectorEnv};

use super::checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_FORMAT_VERSION};
use super::gae::{gae, normalize_advantages};
use super::policy::{sample, PolicyParams, PolicyShape};
use super::ppo::{backprop, Adam, Batch, LossCoefs, LossDiagnostics, PpoConfig};
use super::{rng, ControlError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub env_idx: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update: usize,
    pub loss: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
    pub updates: Vec<UpdateRecord>,
}

/// Receives log records as soon as they exist.
pub trait TrainObserver {
    fn on_episode(&mut self, _record: &EpisodeRecord) -> std::io::Result<()> {
        Ok(())
    }
    fn on_update(&mut self, _record: &UpdateRecord) -> std::io::Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Maps a policy action in `[−1, 1]` onto the box; unbounded axes pass
/// through unchanged.
pub fn to_env_action(a: &[f64], space: &BoxSpace) -> Vec<f64> {
    a.iter()
        .zip(space.low.iter().zip(&space.high))
        .map(|(a, (l, h))| if l.is_finite() && h.is_finite() { l + 0.5 * (a + 1.0) * (h - l) } else { *a })
        .collect()
}

/// PPO agent together with its optimizer and random stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: PpoConfig,
    pub policy: PolicyParams,
    pub adam: Adam,
    pub rng: Pcg64,
    pub log: TrainingLog,
}

impl Trainer {
    pub fn new(config: PpoConfig, obs_dim: usize, act_dim: usize) -> Self {
        let mut rng = rng::stream(config.seed, rng::POLICY_STREAM);
        let shape = PolicyShape::new(obs_dim, act_dim, &config.hidden);
        let policy = PolicyParams::init(shape, config.log_std_init, &mut rng);
        let adam = Adam::new(policy.params.len(), config.lr);
        Trainer { config, policy, adam, rng, log: TrainingLog::default() }
    }

    /// Snapshot of the current policy for `scenario` acting on `space`.
    pub fn checkpoint(&self, scenario: &str, space: &BoxSpace) -> Checkpoint {
        let header = CheckpointHeader {
            format_version: CHECKPOINT_FORMAT_VERSION,
            scenario: scenario.to_owned(),
            shape: self.policy.shape.clone(),
            n_params: self.policy.params.len(),
            config: self.config.clone(),
            action_low: space.low.clone(),
            action_high: space.high.clone(),
            rng: self.rng.clone(),
            updates: self.log.updates.len(),
            episodes: self.log.episodes.len(),
        };
        Checkpoint::new(header, &self.policy)
    }

    /// Deterministic (mean) action mapped onto the action space.
    pub fn act(&self, obs: &[f64], space: &BoxSpace) -> Result<Vec<f64>, ControlError> {
        Ok(to_env_action(&self.policy.policy_forward(obs)?.0, space))
    }

    /// Runs rollout/update cycles until `total_episodes` episodes have
    /// finished. Episodes beyond that count are not logged.
    pub fn train<V: VectorEnv + ?Sized>(
        &mut self,
        venv: &mut V,
        episode_steps: usize,
        observer: &mut dyn TrainObserver,
    ) -> Result<&TrainingLog, ControlError> {
        let cfg = self.config.clone();
        if cfg.total_episodes == 0 {
            return Ok(&self.log);
        }
        let n_steps = if cfg.n_steps == 0 { episode_steps } else { cfg.n_steps };
        cfg.validate(n_steps)?;
        let n_envs = venv.num_envs();
        if n_envs != cfg.n_envs {
            return Err(ControlError::Config(format!("config asks for {} envs, got {n_envs}", cfg.n_envs)));
        }
        if venv.observation_space().shape() != self.policy.shape.obs_dim
            || venv.action_space().shape() != self.policy.shape.act_dim
        {
            return Err(ControlError::Shape("environment spaces do not match the policy".into()));
        }
        let space = venv.action_space().clone();
        let coefs = LossCoefs::from(&cfg);

        let mut obs = venv.reset(Some(cfg.seed))?;
        let mut needs_reset = false;
        let mut ep_ret = vec![0.0; n_envs];
        let mut ep_len = vec![0usize; n_envs];
        let mut finished = 0usize;
        while finished < cfg.total_episodes {
            let mut traj: Vec<Trajectory> = (0..n_envs).map(|_| Trajectory::default()).collect();
            for _ in 0..n_steps {
                if needs_reset {
                    obs = venv.reset(None)?;
                    needs_reset = false;
                }
                let mut actions = Vec::with_capacity(n_envs);
                for (i, o) in obs.iter().enumerate() {
                    let (mean, log_std) = self.policy.policy_forward(o)?;
                    let (a, lp) = sample(&mean, &log_std, &mut self.rng);
                    let v = self.policy.value_forward(o)?;
                    actions.push(to_env_action(&a, &space));
                    let tr = &mut traj[i];
                    tr.obs.push(o.clone());
                    tr.actions.push(a);
                    tr.log_probs.push(lp);
                    tr.values.push(v);
                }
                let results = venv.step(&actions)?;
                let mut n_term = 0;
                for (i, r) in results.iter().enumerate() {
                    traj[i].rewards.push(r.reward);
                    traj[i].terminated.push(r.terminated);
                    ep_ret[i] += r.reward;
                    ep_len[i] += 1;
                    if r.terminated {
                        n_term += 1;
                        if finished < cfg.total_episodes {
                            let rec =
                                EpisodeRecord { episode: finished, env_idx: i, ret: ep_ret[i], length: ep_len[i] };
                            observer.on_episode(&rec).map_err(ControlError::Io)?;
                            self.log.episodes.push(rec);
                        }
                        finished += 1;
                        ep_ret[i] = 0.0;
                        ep_len[i] = 0;
                    }
                }
                if n_term == n_envs {
                    needs_reset = true;
                } else if n_term > 0 {
                    return Err(ControlError::Config("environments terminated out of lock-step".into()));
                }
                obs = results.into_iter().map(|r| r.observation).collect();
            }

            let mut batch = Batch::default();
            for (i, tr) in traj.into_iter().enumerate() {
                let bootstrap = if needs_reset { 0.0 } else { self.policy.value_forward(&obs[i])? };
                let (adv, ret) = gae(&tr.rewards, &tr.values, &tr.terminated, bootstrap, cfg.gamma, cfg.lam)?;
                batch.obs.extend(tr.obs);
                batch.actions.extend(tr.actions);
                batch.old_log_probs.extend(tr.log_probs);
                batch.advantages.extend(adv);
                batch.returns.extend(ret);
            }
            normalize_advantages(&mut batch.advantages);
            let rec = self.update(&batch, coefs)?;
            info!(
                "update {}: loss {:.4} kl {:.5} clip {:.3} episodes {}",
                rec.update, rec.loss, rec.approx_kl, rec.clip_frac, finished
            );
            observer.on_update(&rec).map_err(ControlError::Io)?;
            self.log.updates.push(rec);
        }
        Ok(&self.log)
    }

    fn update(&mut self, batch: &Batch, coefs: LossCoefs) -> Result<UpdateRecord, ControlError> {
        let mb = self.config.minibatch;
        let mut idx: Vec<usize> = (0..batch.len()).collect();
        let mut acc = LossDiagnostics::default();
        let mut count = 0.0;
        for _ in 0..self.config.epochs {
            idx.shuffle(&mut self.rng);
            for chunk in idx.chunks(mb) {
                let (d, g) = backprop(&self.policy, &batch.select(chunk), coefs)?;
                self.adam.step(&mut self.policy.params, &g);
                self.policy.clamp_log_std();
                acc.loss += d.loss;
                acc.clip_frac += d.clip_frac;
                acc.approx_kl += d.approx_kl;
                acc.entropy += d.entropy;
                count += 1.0;
            }
        }
        if self.policy.params.iter().any(|p| !p.is_finite()) {
            return Err(ControlError::NonFinite("policy parameters after update".into()));
        }
        Ok(UpdateRecord {
            update: self.log.updates.len(),
            loss: acc.loss / count,
            clip_frac: acc.clip_frac / count,
            approx_kl: acc.approx_kl / count,
            entropy: acc.entropy / count,
        })
    }
}

#[derive(Default)]
struct Trajectory {
    obs: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    terminated: Vec<bool>,
}
