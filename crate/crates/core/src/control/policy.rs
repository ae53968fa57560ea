use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::MlpShape;
use super::ControlError;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `Σ_i −(a_i−μ_i)²/(2σ_i²) − log σ_i − ½ log 2π`.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// `Σ_i ½ + ½ log 2π + log σ_i`.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 + 0.5 * (2.0 * PI).ln() + ls).sum()
}

/// Layer shapes of an actor-critic pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub actor: MlpShape,
    pub critic: MlpShape,
}

impl PolicyShape {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize]) -> Self {
        PolicyShape {
            obs_dim,
            act_dim,
            actor: MlpShape::new(obs_dim, hidden, act_dim),
            critic: MlpShape::new(obs_dim, hidden, 1),
        }
    }

    pub fn actor_range(&self) -> Range<usize> {
        0..self.actor.n_params()
    }

    pub fn log_std_range(&self) -> Range<usize> {
        let a = self.actor.n_params();
        a..a + self.act_dim
    }

    pub fn critic_range(&self) -> Range<usize> {
        let a = self.log_std_range().end;
        a..a + self.critic.n_params()
    }

    pub fn n_params(&self) -> usize {
        self.critic_range().end
    }
}

/// Gaussian policy with state-independent log standard deviation and a
/// separate value network, stored as one flat parameter vector laid out as
/// `[actor | log_std | critic]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub shape: PolicyShape,
    pub params: Vec<f64>,
}

impl PolicyParams {
    pub fn init<R: Rng>(shape: PolicyShape, log_std_init: f64, rng: &mut R) -> Self {
        let mut params = shape.actor.init(rng, 0.01);
        // the final actor biases start at zero so the initial mean is ~0
        let n = params.len();
        params[n - shape.act_dim..].iter_mut().for_each(|b| *b = 0.0);
        params.extend(std::iter::repeat_n(log_std_init.clamp(LOG_STD_MIN, LOG_STD_MAX), shape.act_dim));
        params.extend(shape.critic.init(rng, 1.0));
        PolicyParams { shape, params }
    }

    pub fn from_flat(shape: PolicyShape, params: Vec<f64>) -> Result<Self, ControlError> {
        if params.len() != shape.n_params() {
            return Err(ControlError::Shape(format!("expected {} parameters, got {}", shape.n_params(), params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ControlError::NonFinite("policy parameters".into()));
        }
        Ok(PolicyParams { shape, params })
    }

    pub fn actor_params(&self) -> &[f64] {
        &self.params[self.shape.actor_range()]
    }

    pub fn critic_params(&self) -> &[f64] {
        &self.params[self.shape.critic_range()]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.shape.log_std_range()]
    }

    fn check_obs(&self, obs: &[f64]) -> Result<(), ControlError> {
        if obs.len() != self.shape.obs_dim {
            return Err(ControlError::Shape(format!(
                "observation has length {}, policy expects {}",
                obs.len(),
                self.shape.obs_dim
            )));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(ControlError::NonFinite(format!("observation {obs:?}")));
        }
        Ok(())
    }

    /// Action mean and log standard deviation.
    pub fn policy_forward(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ControlError> {
        self.check_obs(obs)?;
        Ok((self.shape.actor.forward(self.actor_params(), obs), self.log_std().to_vec()))
    }

    pub fn value_forward(&self, obs: &[f64]) -> Result<f64, ControlError> {
        self.check_obs(obs)?;
        Ok(self.shape.critic.forward(self.critic_params(), obs)[0])
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(self.log_std())
    }

    pub fn clamp_log_std(&mut self) {
        let r = self.shape.log_std_range();
        self.params[r].iter_mut().for_each(|v| *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }
}

/// Draws `a ~ N(mean, exp(log_std)²)` and returns it with its log density.
pub fn sample<R: Rng>(mean: &[f64], log_std: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let action: Vec<f64> =
        mean.iter().zip(log_std).map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal)).collect();
    let lp = gaussian_log_prob(&action, mean, log_std);
    (action, lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::rng;

    #[test]
    fn log_prob_at_mean_unit_sigma() {
        let lp = gaussian_log_prob(&[0.3, -2.0], &[0.3, -2.0], &[0.0, 0.0]);
        assert!((lp - 2.0 * -0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn entropy_closed_form() {
        let ls = [0.1, -0.4, 1.3];
        let want: f64 = ls.iter().map(|l| 0.5 + 0.5 * (2.0 * PI).ln() + l).sum();
        assert!((gaussian_entropy(&ls) - want).abs() < 1e-12);
    }

    #[test]
    fn zero_network_has_zero_mean() {
        let shape = PolicyShape::new(4, 2, &[64, 64]);
        let p = PolicyParams::from_flat(shape.clone(), vec![0.0; shape.n_params()]).unwrap();
        let (mean, ls) = p.policy_forward(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(mean, vec![0.0, 0.0]);
        assert_eq!(ls, vec![0.0, 0.0]);
    }

    #[test]
    fn sampling_is_seeded() {
        let shape = PolicyShape::new(3, 1, &[8]);
        let p = PolicyParams::init(shape, 0.0, &mut rng::stream(1, 0));
        let (m, ls) = p.policy_forward(&[0.1, 0.2, 0.3]).unwrap();
        let a = sample(&m, &ls, &mut rng::stream(5, 0));
        let b = sample(&m, &ls, &mut rng::stream(5, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_observation() {
        let shape = PolicyShape::new(2, 1, &[4]);
        let p = PolicyParams::init(shape, 0.0, &mut rng::stream(1, 0));
        assert!(matches!(p.policy_forward(&[f64::NAN, 0.0]), Err(ControlError::NonFinite(_))));
        assert!(matches!(p.value_forward(&[0.0]), Err(ControlError::Shape(_))));
    }

    #[test]
    fn log_std_clamped() {
        let shape = PolicyShape::new(2, 2, &[4]);
        let mut p = PolicyParams::init(shape, 0.0, &mut rng::stream(1, 0));
        let r = p.shape.log_std_range();
        p.params[r.start] = 5.0;
        p.params[r.start + 1] = -30.0;
        p.clamp_log_std();
        assert_eq!(p.log_std(), &[LOG_STD_MAX, LOG_STD_MIN]);
    }
}
