use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EnvError;

/// Axis-aligned box of real vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpace {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoxSpace {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self, EnvError> {
        if low.len() != high.len() || low.is_empty() {
            return Err(EnvError::Hook(format!(
                "box bounds must be non-empty and of equal length, got {} and {}",
                low.len(),
                high.len()
            )));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l <= h)) {
            return Err(EnvError::Hook("box lower bound exceeds upper bound".into()));
        }
        Ok(BoxSpace { low, high })
    }

    /// Unbounded box of dimension `n`.
    pub fn unbounded(n: usize) -> Self {
        BoxSpace { low: vec![f64::NEG_INFINITY; n], high: vec![f64::INFINITY; n] }
    }

    pub fn shape(&self) -> usize {
        self.low.len()
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.low.iter().zip(&self.high)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.shape() && x.iter().zip(self.low.iter().zip(&self.high)).all(|(v, (l, h))| l <= v && v <= h)
    }
}

/// Experience produced by one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    /// Always `false`: episodes end only at the coupling end time.
    pub truncated: bool,
    /// Always empty.
    pub info: BTreeMap<String, String>,
}

/// Lock-step batch of environments as seen by a trainer.
pub trait VectorEnv {
    fn num_envs(&self) -> usize;
    fn action_space(&self) -> &BoxSpace;
    fn observation_space(&self) -> &BoxSpace;
    fn reset(&mut self, seed: Option<u64>) -> Result<Vec<Vec<f64>>, EnvError>;
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Vec<StepResult>, EnvError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_and_contains() {
        let b = BoxSpace::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(b.clamp(&[3.0, -1.0]), vec![1.0, 0.0]);
        assert!(b.contains(&[0.0, 2.0]));
        assert!(!b.contains(&[0.0]));
        assert!(BoxSpace::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxSpace::unbounded(3).contains(&[1e300, -1e300, 0.0]));
    }
}
