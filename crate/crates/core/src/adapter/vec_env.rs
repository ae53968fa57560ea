use std::thread;

use super::instance::EnvInstance;
use super::space::{BoxSpace, StepResult, VectorEnv};
use super::EnvError;

/// `n` environments stepped in lock-step, each on its own thread during a
/// call. A terminated environment is reset at the following `step`; its
/// action there is ignored and the fresh initial observation is returned
/// with zero reward.
pub struct VecEnv {
    envs: Vec<EnvInstance>,
    pending_reset: Vec<bool>,
    action_space: BoxSpace,
    observation_space: BoxSpace,
}

fn tag<T>(idx: usize, r: Result<T, EnvError>) -> Result<T, EnvError> {
    r.map_err(|e| EnvError::Instance { idx, source: Box::new(e) })
}

impl VecEnv {
    /// Builds `n` instances with `make(idx)`.
    pub fn new(n: usize, mut make: impl FnMut(usize) -> Result<EnvInstance, EnvError>) -> Result<Self, EnvError> {
        if n == 0 {
            return Err(EnvError::Options("at least one environment is required".into()));
        }
        let envs = (0..n).map(|i| tag(i, make(i))).collect::<Result<Vec<_>, _>>()?;
        let action_space = envs[0].action_space().clone();
        let observation_space = envs[0].observation_space().clone();
        if envs.iter().any(|e| e.action_space() != &action_space || e.observation_space() != &observation_space) {
            return Err(EnvError::Options("environments disagree on their spaces".into()));
        }
        Ok(VecEnv { pending_reset: vec![false; n], envs, action_space, observation_space })
    }

    pub fn envs(&self) -> &[EnvInstance] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [EnvInstance] {
        &mut self.envs
    }

    pub fn episode_steps(&self) -> usize {
        self.envs[0].episode_steps()
    }

    /// Resets every instance; instance `i` receives seed `seed + i`.
    pub fn reset_all(&mut self, seed: Option<u64>) -> Result<Vec<Vec<f64>>, EnvError> {
        let results: Vec<Result<Vec<f64>, EnvError>> = thread::scope(|scope| {
            let handles: Vec<_> = self
                .envs
                .iter_mut()
                .enumerate()
                .map(|(i, env)| scope.spawn(move || env.reset(seed.map(|s| s.wrapping_add(i as u64))).map(|(o, _)| o)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("environment thread panicked")).collect()
        });
        self.pending_reset.iter_mut().for_each(|p| *p = false);
        results.into_iter().enumerate().map(|(i, r)| tag(i, r)).collect()
    }

    pub fn step_all(&mut self, actions: &[Vec<f64>]) -> Result<Vec<StepResult>, EnvError> {
        if actions.len() != self.envs.len() {
            return Err(EnvError::Action(format!("{} actions for {} environments", actions.len(), self.envs.len())));
        }
        let pending = self.pending_reset.clone();
        let results: Vec<Result<StepResult, EnvError>> = thread::scope(|scope| {
            let handles: Vec<_> = self
                .envs
                .iter_mut()
                .zip(actions)
                .zip(pending)
                .map(|((env, action), reset)| {
                    scope.spawn(move || {
                        if reset {
                            env.reset(None).map(|(observation, info)| StepResult {
                                observation,
                                reward: 0.0,
                                terminated: false,
                                truncated: false,
                                info,
                            })
                        } else {
                            env.step(action)
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("environment thread panicked")).collect()
        });
        let mut out = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            let r = tag(i, r)?;
            self.pending_reset[i] = r.terminated;
            out.push(r);
        }
        Ok(out)
    }

    pub fn close(&mut self) {
        for e in &mut self.envs {
            e.close();
        }
    }
}

impl VectorEnv for VecEnv {
    fn num_envs(&self) -> usize {
        self.envs.len()
    }

    fn action_space(&self) -> &BoxSpace {
        &self.action_space
    }

    fn observation_space(&self) -> &BoxSpace {
        &self.observation_space
    }

    fn reset(&mut self, seed: Option<u64>) -> Result<Vec<Vec<f64>>, EnvError> {
        self.reset_all(seed)
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Vec<StepResult>, EnvError> {
        self.step_all(actions)
    }
}
