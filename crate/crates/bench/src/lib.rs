//! Inputs shared by the benchmarks.

use flowbridge_core::control::{Batch, PolicyShape};
use flowbridge_core::transport::Message;

/// A DATA frame carrying `n` values.
pub fn data_frame(n: usize) -> Message {
    Message::Data {
        field: "Velocity".into(),
        mesh: "jet1".into(),
        window: 42,
        values: (0..n).map(|i| (i as f64 * 0.37).sin()).collect(),
    }
}

/// A deterministic PPO minibatch of `n` samples for `shape`.
pub fn batch(shape: &PolicyShape, n: usize) -> Batch {
    let wave = |i: usize, j: usize| ((i * 31 + j * 7) as f64 * 0.013).sin();
    Batch {
        obs: (0..n).map(|i| (0..shape.obs_dim).map(|j| wave(i, j)).collect()).collect(),
        actions: (0..n).map(|i| (0..shape.act_dim).map(|j| 0.5 * wave(j, i)).collect()).collect(),
        old_log_probs: (0..n).map(|i| -1.0 + 0.1 * wave(i, 3)).collect(),
        advantages: (0..n).map(|i| wave(i, 5)).collect(),
        returns: (0..n).map(|i| wave(i, 9)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_have_requested_sizes() {
        let shape = PolicyShape::new(11, 1, &[64, 64]);
        let b = batch(&shape, 40);
        assert_eq!(b.len(), 40);
        assert_eq!(b.obs[0].len(), 11);
        let bytes = data_frame(100).encode();
        assert_eq!(Message::decode(&bytes).unwrap().0, data_frame(100));
    }
}
