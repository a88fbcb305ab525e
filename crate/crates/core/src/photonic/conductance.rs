//! Memristor conductances holding the weights of each trainable layer.
//!
//! A layer is stored as an `out × (fan_in + 1)` matrix: row `k` holds the
//! flattened kernel (or FC row) of output `k` followed by its bias, which is
//! driven by an always-on input. Values are normalised to the symmetric range
//! `[-w_max, w_max]` fixed when the layer is first programmed.

use alloc::vec::Vec;

use crate::cnn::{Layer, Model};
use crate::error::{Error, Result};
use crate::noise::{self, gaussian, snr_sigma, NoiseModel, Site};
use crate::photonic::sites;
use crate::rng::Stream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerConductance {
    /// Index of the layer in the model.
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub weight_shape: Vec<usize>,
    pub values: Vec<f64>,
    pub range: f64,
    /// Number of conductance states; `None` stores exact values.
    pub states: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConductanceState {
    pub layers: Vec<LayerConductance>,
}

/// Result of one conductance update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub value: f64,
    pub stuck: bool,
}

impl LayerConductance {
    pub fn from_params(layer: usize, weights: &Tensor, bias: &Tensor, noise: &NoiseModel) -> Result<Self> {
        let rows = weights.shape()[0];
        if bias.len() != rows {
            return Err(Error::shape("conductance bias", weights.shape(), bias.shape()));
        }
        let fan_in = weights.len() / rows.max(1);
        let cols = fan_in + 1;
        let mut values = Vec::with_capacity(rows * cols);
        for (row, b) in weights.data().chunks_exact(fan_in.max(1)).zip(bias.data()) {
            values.extend_from_slice(row);
            values.push(*b);
        }
        sites::dac_symmetric(&mut values, noise)?;
        let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let range = if m > 0.0 { m } else { 1.0 };
        let states = noise.enabled(Site::Memristor).then_some(noise.memristor_states);
        if let Some(s) = states {
            for v in values.iter_mut() {
                *v = noise::quantize_uniform(*v, -range, range, u64::from(s))?;
            }
        }
        Ok(LayerConductance {
            layer,
            rows,
            cols,
            weight_shape: weights.shape().to_vec(),
            values,
            range,
            states,
        })
    }

    pub fn weights(&self) -> Tensor {
        let fan_in = self.cols - 1;
        let mut w = Vec::with_capacity(self.rows * fan_in);
        for row in self.values.chunks_exact(self.cols) {
            w.extend_from_slice(&row[..fan_in]);
        }
        Tensor::new(self.weight_shape.clone(), w).expect("stored shape matches")
    }

    pub fn bias(&self) -> Tensor {
        Tensor::vector(self.values.chunks_exact(self.cols).map(|row| row[self.cols - 1]).collect())
    }

    pub fn level_index(&self, value: f64) -> Option<u64> {
        let s = u64::from(self.states?);
        noise::quantize_index(value, -self.range, self.range, s).ok()
    }

    pub fn is_on_grid(&self) -> bool {
        let Some(s) = self.states else { return true };
        self.values.iter().all(|&v| {
            let idx = noise::quantize_index(v, -self.range, self.range, u64::from(s)).expect("valid range");
            noise::level_value(idx, -self.range, self.range, u64::from(s)) == v
        })
    }
}

impl ConductanceState {
    /// Programs every trainable layer of `model` through the DAC and onto the
    /// memristor grid.
    pub fn program(model: &Model, noise: &NoiseModel) -> Result<Self> {
        let mut layers = Vec::new();
        for (i, layer) in model.layers.iter().enumerate() {
            if let Some((w, b)) = layer.params() {
                layers.push(LayerConductance::from_params(i, w, b, noise)?);
            }
        }
        Ok(ConductanceState { layers })
    }

    pub fn get(&self, layer: usize) -> Option<&LayerConductance> {
        self.layers.iter().find(|l| l.layer == layer)
    }

    pub fn get_mut(&mut self, layer: usize) -> Option<&mut LayerConductance> {
        self.layers.iter_mut().find(|l| l.layer == layer)
    }

    pub fn is_on_grid(&self) -> bool {
        self.layers.iter().all(LayerConductance::is_on_grid)
    }

    /// Copies the stored weights into a model with the same structure.
    pub fn write_into(&self, model: &mut Model) -> Result<()> {
        for l in &self.layers {
            match model.layers.get_mut(l.layer) {
                Some(Layer::Conv { weights, bias }) | Some(Layer::Fc { weights, bias }) => {
                    if weights.shape() != l.weight_shape.as_slice() {
                        return Err(Error::shape("conductance layer", &l.weight_shape, weights.shape()));
                    }
                    *weights = l.weights();
                    *bias = l.bias();
                }
                _ => {
                    return Err(Error::param("conductance", alloc::format!("layer {} is not trainable", l.layer)));
                }
            }
        }
        Ok(())
    }
}

/// Commits `C_old − step` to the grid. `step` is already scaled by `η/m`.
pub fn commit(c_old: f64, step: f64, range: f64, states: Option<u32>) -> Result<UpdateOutcome> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::param("range", "conductance range must be finite and positive"));
    }
    let raw = (c_old - step).clamp(-range, range);
    let value = match states {
        Some(s) => noise::quantize_uniform(raw, -range, range, u64::from(s))?,
        None => raw,
    };
    Ok(UpdateOutcome {
        value,
        stuck: step != 0.0 && value == c_old,
    })
}

/// Single-cell update `C_new = C_old − (η/m)·δ_k·O_j`, with interface noise
/// on the update relative to its own power, quantization to the memristor
/// grid of `[-range, range]` and clamping to that range.
pub fn weight_update_photonic(
    delta_k: f64,
    o_prev_j: f64,
    c_old: f64,
    params: &crate::cnn::TrainParams,
    noise: &NoiseModel,
    range: f64,
    rng: &mut Stream,
) -> Result<UpdateOutcome> {
    if params.batch_size == 0 {
        return Err(Error::param("batch_size", "must be at least 1"));
    }
    let mut step = params.learning_rate / params.batch_size as f64 * delta_k * o_prev_j;
    let sigma = snr_sigma(step * step, noise.snr_db(Site::Interface));
    if sigma > 0.0 {
        step += sigma * gaussian(rng);
    }
    let states = noise.enabled(Site::Memristor).then_some(noise.memristor_states);
    commit(c_old, step, range, states)
}
