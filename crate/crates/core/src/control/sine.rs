use serde::{Deserialize, Serialize};

use super::ControlError;

const BOUND_TOL: f64 = 1e-12;

/// Open-loop controller `y(t) = y0 + A·sin(2π f t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineController {
    pub y0: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl SineController {
    /// Checks that the output stays within `[low, high]` for all `t`.
    pub fn new(y0: f64, amplitude: f64, frequency: f64, low: f64, high: f64) -> Result<Self, ControlError> {
        if !(amplitude >= 0.0)
            || !(frequency >= 0.0)
            || !y0.is_finite()
            || !amplitude.is_finite()
            || !frequency.is_finite()
        {
            return Err(ControlError::Config("amplitude and frequency must be finite and nonnegative".into()));
        }
        if y0 - amplitude < low - BOUND_TOL || y0 + amplitude > high + BOUND_TOL {
            return Err(ControlError::Config(format!(
                "sinusoid {y0} ± {amplitude} leaves the action bounds [{low}, {high}]"
            )));
        }
        Ok(SineController { y0, amplitude, frequency })
    }

    pub fn action(&self, t: f64) -> f64 {
        self.y0 + self.amplitude * (2.0 * std::f64::consts::PI * self.frequency * t).sin()
    }
}
