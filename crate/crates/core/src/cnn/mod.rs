//! Exact floating-point CNN: forward pass, backpropagation and SGD.

pub mod model;
pub mod network;
pub mod ops;

pub use model::{encode_target, BatchStats, one_hot, quadratic_loss, ForwardCache, Layer, LayerDeltas, Model};
pub use network::{build_network, build_network_for_input, Benchmark, FeGroup, LayerShape, NetworkConfig, Stage, StageKind};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    /// Target value of the non-label outputs; the label output targets
    /// `1 − target_low`.
    pub target_low: f64,
    /// Initial value of every bias.
    pub bias_init: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 0.07,
            batch_size: 4,
            epochs: 3,
            rng_seed: 0,
            target_low: 0.1,
            bias_init: 0.1,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be finite and positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if !(0.0..0.5).contains(&self.target_low) {
            return Err(Error::param("target_low", "must lie in [0, 0.5)"));
        }
        if !self.bias_init.is_finite() {
            return Err(Error::param("bias_init", "must be finite"));
        }
        Ok(())
    }
}
