use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected network with tanh hidden layers and a linear output.
///
/// Parameters live in one flat slice: for each layer the `out × in`
/// weight matrix (row-major) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
}

/// Layer outputs kept for the backward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl MlpShape {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        MlpShape { sizes }
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sizes.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(|(i, o)| o * i + o).sum()
    }

    /// Uniform fan-in initialization, `U(−1/√in, 1/√in)` for weights and
    /// biases; the output layer is then scaled by `out_scale`.
    pub fn init<R: Rng>(&self, rng: &mut R, out_scale: f64) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut p = Vec::with_capacity(self.n_params());
        for (l, (fan_in, fan_out)) in self.layers().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let scale = if l + 1 == n_layers { out_scale } else { 1.0 };
            for _ in 0..(fan_in * fan_out + fan_out) {
                p.push(rng.gen_range(-bound..bound) * scale);
            }
        }
        p
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward_cached(params, x).acts.pop().unwrap()
    }

    pub fn forward_cached(&self, params: &[f64], x: &[f64]) -> MlpCache {
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(x.len(), self.input());
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for (l, (fan_in, fan_out)) in self.layers().enumerate() {
            let w = &params[off..off + fan_in * fan_out];
            let b = &params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let input = &acts[l];
            let mut out: Vec<f64> = (0..fan_out)
                .map(|o| b[o] + w[o * fan_in..(o + 1) * fan_in].iter().zip(input).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        MlpCache { acts }
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂output`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) {
        let layers: Vec<(usize, usize)> = self.layers().collect();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut off = 0;
        for &(i, o) in &layers {
            offsets.push(off);
            off += i * o + o;
        }
        let mut delta = grad_out.to_vec();
        for l in (0..layers.len()).rev() {
            let (fan_in, fan_out) = layers[l];
            let off = offsets[l];
            let input = &cache.acts[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                grad[off + fan_in * fan_out + o] += d;
            }
            if l > 0 {
                let w = &params[off..off + fan_in * fan_out];
                delta = (0..fan_in)
                    .map(|i| {
                        let s: f64 = (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum();
                        s * (1.0 - input[i] * input[i])
                    })
                    .collect();
            }
        }
    }
}
