use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Stage delays in picoseconds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TimingParams {
    /// Clock period of the feature-extraction slot.
    pub t_sm: f64,
    pub t_photodiode: f64,
    pub t_relu: f64,
    pub t_pool: f64,
    pub t_interface: f64,
    /// Components of one backward stage.
    pub t_b_components: Vec<f64>,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            t_sm: 400.0,
            t_photodiode: 20.0,
            t_relu: 10.0,
            t_pool: 10.0,
            t_interface: 10.0,
            t_b_components: vec![10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 20.0],
        }
    }
}

impl TimingParams {
    /// Latency of moving features from one FE stage to the next.
    pub fn t_fe(&self) -> f64 {
        self.t_photodiode + self.t_relu + self.t_pool + self.t_interface
    }

    /// Latency of one backward stage.
    pub fn t_b(&self) -> f64 {
        self.t_b_components.iter().sum()
    }

    /// Data movements that fit in one clock slot (at least one).
    pub fn moves_per_slot(&self) -> usize {
        let m = libm::floor(self.t_sm / self.t_fe());
        if m >= 1.0 {
            m as usize
        } else {
            1
        }
    }

    /// Every delay multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        TimingParams {
            t_sm: self.t_sm * factor,
            t_photodiode: self.t_photodiode * factor,
            t_relu: self.t_relu * factor,
            t_pool: self.t_pool * factor,
            t_interface: self.t_interface * factor,
            t_b_components: self.t_b_components.iter().map(|t| t * factor).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.t_sm, self.t_photodiode, self.t_relu, self.t_pool, self.t_interface];
        if all.iter().chain(&self.t_b_components).any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::param("timing", "delays must be finite and non-negative"));
        }
        if self.t_sm <= 0.0 || self.t_fe() <= 0.0 {
            return Err(Error::param("timing", "t_sm and the FE transfer time must be positive"));
        }
        Ok(())
    }
}
