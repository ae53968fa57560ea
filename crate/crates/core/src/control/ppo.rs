use serde::{Deserialize, Serialize};

use super::policy::{gaussian_entropy, gaussian_log_prob, PolicyParams};
use super::ControlError;

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip_eps: f64,
    pub lr: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub n_envs: usize,
    /// Rollout length per environment; 0 means one full episode.
    pub n_steps: usize,
    pub total_episodes: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            lr: 3e-4,
            epochs: 10,
            minibatch: 40,
            vf_coef: 0.5,
            ent_coef: 0.0,
            n_envs: 4,
            n_steps: 0,
            total_episodes: 150,
            seed: 0,
            hidden: vec![64, 64],
            log_std_init: 0.0,
        }
    }
}

impl PpoConfig {
    /// Checks the invariants once the rollout length is known.
    pub fn validate(&self, n_steps: usize) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lam > 0.0 && self.lam <= 1.0) {
            return bad(format!("gamma and lam must lie in (0, 1], got {} and {}", self.gamma, self.lam));
        }
        if !(self.clip_eps > 0.0) || !(self.lr > 0.0) {
            return bad("clip_eps and lr must be positive".into());
        }
        if self.epochs == 0 || self.n_envs == 0 || n_steps == 0 || self.minibatch == 0 {
            return bad("epochs, n_envs, n_steps and minibatch must be positive".into());
        }
        let batch = self.n_envs * n_steps;
        if !batch.is_multiple_of(self.minibatch) {
            return bad(format!("minibatch {} does not divide batch size {batch}", self.minibatch));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }
}

/// On-policy samples with advantages already normalized.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            obs: idx.iter().map(|&i| self.obs[i].clone()).collect(),
            actions: idx.iter().map(|&i| self.actions[i].clone()).collect(),
            old_log_probs: idx.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossCoefs {
    pub clip_eps: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
}

impl From<&PpoConfig> for LossCoefs {
    fn from(c: &PpoConfig) -> Self {
        LossCoefs { clip_eps: c.clip_eps, vf_coef: c.vf_coef, ent_coef: c.ent_coef }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossDiagnostics {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
}

/// Per-sample clipped surrogate `min(ρÂ, clip(ρ, 1−ε, 1+ε)Â)`.
pub fn clipped_objective(ratio: f64, adv: f64, clip_eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv)
}

pub fn ppo_loss(params: &PolicyParams, batch: &Batch, coefs: LossCoefs) -> Result<LossDiagnostics, ControlError> {
    loss_impl(params, batch, coefs, None)
}

/// Loss diagnostics and the gradient of the loss with respect to every
/// parameter.
pub fn backprop(
    params: &PolicyParams,
    batch: &Batch,
    coefs: LossCoefs,
) -> Result<(LossDiagnostics, Vec<f64>), ControlError> {
    let mut grad = vec![0.0; params.params.len()];
    let d = loss_impl(params, batch, coefs, Some(&mut grad))?;
    Ok((d, grad))
}

fn loss_impl(
    params: &PolicyParams,
    batch: &Batch,
    coefs: LossCoefs,
    mut grad: Option<&mut Vec<f64>>,
) -> Result<LossDiagnostics, ControlError> {
    if batch.is_empty() {
        return Err(ControlError::Shape("empty batch".into()));
    }
    let shape = &params.shape;
    let n = batch.len() as f64;
    let log_std = params.log_std();
    let (ar, lr, cr) = (shape.actor_range(), shape.log_std_range(), shape.critic_range());
    let mut d = LossDiagnostics::default();
    let mut clipped = 0usize;
    for i in 0..batch.len() {
        let obs = &batch.obs[i];
        let act = &batch.actions[i];
        let adv = batch.advantages[i];
        let actor = shape.actor.forward_cached(&params.params[ar.clone()], obs);
        let mean = actor.output();
        let logp = gaussian_log_prob(act, mean, log_std);
        let log_ratio = logp - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let unclipped = ratio * adv;
        let surrogate = clipped_objective(ratio, adv, coefs.clip_eps);
        d.policy_loss -= surrogate / n;
        d.approx_kl += ((ratio - 1.0) - log_ratio) / n;
        if (ratio - 1.0).abs() > coefs.clip_eps {
            clipped += 1;
        }
        let critic = shape.critic.forward_cached(&params.params[cr.clone()], obs);
        let v = critic.output()[0];
        let err = v - batch.returns[i];
        d.value_loss += err * err / n;

        if let Some(g) = grad.as_deref_mut() {
            // the clipped branch is constant in the parameters
            if unclipped <= surrogate {
                let coef = -ratio * adv / n;
                let mut g_mean = vec![0.0; shape.act_dim];
                for j in 0..shape.act_dim {
                    let var = (2.0 * log_std[j]).exp();
                    let diff = act[j] - mean[j];
                    g_mean[j] = coef * diff / var;
                    g[lr.start + j] += coef * (diff * diff / var - 1.0);
                }
                shape.actor.backward(&params.params[ar.clone()], &actor, &g_mean, &mut g[ar.clone()]);
            }
            let g_v = [2.0 * coefs.vf_coef * err / n];
            shape.critic.backward(&params.params[cr.clone()], &critic, &g_v, &mut g[cr.clone()]);
        }
    }
    d.entropy = gaussian_entropy(log_std);
    if let Some(g) = grad.as_deref_mut() {
        for j in lr.clone() {
            g[j] -= coefs.ent_coef;
        }
    }
    d.clip_frac = clipped as f64 / n;
    d.loss = d.policy_loss + coefs.vf_coef * d.value_loss - coefs.ent_coef * d.entropy;
    if !d.loss.is_finite() || grad.as_deref().is_some_and(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(ControlError::NonFinite(format!("ppo loss: {d:?}")));
    }
    Ok(d)
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::policy::{sample, PolicyShape};
    use crate::control::rng;
    use rand::Rng;

    #[test]
    fn clip_examples() {
        assert_eq!(clipped_objective(1.0, 0.7, 0.2), 0.7);
        assert_eq!(clipped_objective(1.5, 1.0, 0.2), 1.2);
        assert_eq!(clipped_objective(0.5, -1.0, 0.2), -0.8);
    }

    fn toy(seed: u64) -> (PolicyParams, Batch) {
        let mut r = rng::stream(seed, 0);
        let shape = PolicyShape::new(4, 2, &[6, 5]);
        let mut p = PolicyParams::init(shape, -0.3, &mut r);
        // larger output weights so the mean actually depends on the input
        for x in &mut p.params[p.shape.actor_range()] {
            *x *= 10.0;
        }
        let mut b = Batch::default();
        for _ in 0..8 {
            let obs: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
            let (m, ls) = p.policy_forward(&obs).unwrap();
            let (a, lp) = sample(&m, &ls, &mut r);
            b.obs.push(obs);
            b.actions.push(a);
            b.old_log_probs.push(lp + r.gen_range(-0.05..0.05));
            b.advantages.push(r.gen_range(-1.0..1.0));
            b.returns.push(r.gen_range(-1.0..1.0));
        }
        (p, b)
    }

    #[test]
    fn ratio_one_gives_mean_advantage() {
        let (p, mut b) = toy(1);
        for i in 0..b.len() {
            let (m, ls) = p.policy_forward(&b.obs[i]).unwrap();
            b.old_log_probs[i] = gaussian_log_prob(&b.actions[i], &m, &ls);
        }
        let d = ppo_loss(&p, &b, LossCoefs { clip_eps: 1e-12, vf_coef: 0.0, ent_coef: 0.0 }).unwrap();
        let mean_adv = b.advantages.iter().sum::<f64>() / b.len() as f64;
        assert!((d.policy_loss + mean_adv).abs() < 1e-12);
        assert_eq!(d.clip_frac, 0.0);
        assert!(d.approx_kl.abs() < 1e-15);
    }

    #[test]
    fn zero_advantage_leaves_actor_untouched() {
        let (p, mut b) = toy(2);
        b.advantages.iter_mut().for_each(|a| *a = 0.0);
        let (_, g) = backprop(&p, &b, LossCoefs { clip_eps: 0.2, vf_coef: 0.5, ent_coef: 0.0 }).unwrap();
        assert!(g[p.shape.actor_range()].iter().all(|&x| x == 0.0));
        assert!(g[p.shape.log_std_range()].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn value_gradient_linear_in_vf_coef() {
        let (p, b) = toy(3);
        let c = LossCoefs { clip_eps: 0.2, vf_coef: 0.5, ent_coef: 0.01 };
        let (_, g1) = backprop(&p, &b, c).unwrap();
        let (_, g2) = backprop(&p, &b, LossCoefs { vf_coef: 1.0, ..c }).unwrap();
        for i in p.shape.critic_range() {
            assert_eq!(g2[i], 2.0 * g1[i]);
        }
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut a = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        a.step(&mut p, &[2.0, -3.0]);
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] + 0.9).abs() < 1e-9);
    }

    #[test]
    fn minibatch_must_divide_batch() {
        let c = PpoConfig { minibatch: 64, ..PpoConfig::default() };
        assert!(c.validate(20).is_err());
        PpoConfig::default().validate(20).unwrap();
    }
}
