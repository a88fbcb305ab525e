//! Parameterised golden model: initialisation, forward pass with cache,
//! backpropagation and mini-batch gradient descent.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::network::{NetworkConfig, StageKind};
use super::ops::{
    conv_backward_input, conv_forward, fc_backward_input, fc_forward, max_pool, max_pool_backward,
    relu, relu_derivative_scalar, same_padding, sgd_update,
};
use super::TrainParams;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Layer {
    /// Stride-1 convolution with "same" padding.
    Conv { weights: Tensor, bias: Tensor },
    Fc { weights: Tensor, bias: Tensor },
    Relu,
    Pool { window: usize },
}

impl Layer {
    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Conv { weights, bias } | Layer::Fc { weights, bias } => Some((weights, bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Conv { weights, bias } | Layer::Fc { weights, bias } => Some((weights, bias)),
            _ => None,
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.params().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Model {
    pub config: NetworkConfig,
    pub layers: Vec<Layer>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[i]` is the input of layer `i`; the last entry is the output.
    pub inputs: Vec<Tensor>,
    pub argmax: Vec<Option<Vec<usize>>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        self.inputs.last().expect("cache holds at least the input")
    }
}

/// Summed loss and correct predictions of one mini-batch, measured on the
/// forward pass before the update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchStats {
    pub loss: f64,
    pub correct: usize,
}

/// Per-layer `δ` (gradient at the pre-activation output of each trainable layer).
pub type LayerDeltas = Vec<Option<Tensor>>;

pub fn one_hot(label: usize, classes: usize) -> Result<Tensor> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let mut t = Tensor::zeros([classes]);
    t.data_mut()[label] = 1.0;
    Ok(t)
}

/// Training target: `1 − low` at the label and `low` elsewhere.
pub fn encode_target(label: usize, classes: usize, low: f64) -> Result<Tensor> {
    let mut t = one_hot(label, classes)?;
    for v in t.data_mut() {
        *v = if *v == 1.0 { 1.0 - low } else { low };
    }
    Ok(t)
}

/// Quadratic cost `½‖a − y‖²`.
pub fn quadratic_loss(output: &Tensor, target: &Tensor) -> f64 {
    output
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, y)| 0.5 * (a - y) * (a - y))
        .sum()
}

/// Glorot-uniform bound `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

impl Model {
    /// Seeded Glorot-uniform weights; biases start at `bias_init`.
    pub fn init(config: &NetworkConfig, seed: u64, bias_init: f64) -> Result<Self> {
        config.validate()?;
        let shapes = config.layers()?;
        let mut layers = Vec::with_capacity(shapes.len());
        for (i, l) in shapes.iter().enumerate() {
            let mut r = rng::stream(seed, &[rng::tag::INIT, i as u64]);
            let layer = match l.kind {
                StageKind::Conv => {
                    let (cin, cout, k) = (l.input.0, l.output.0, l.filter);
                    let bound = glorot_bound(cin * k * k, cout * k * k);
                    Layer::Conv {
                        weights: Tensor::from_fn([cout, cin, k, k], |_| r.random_range(-bound..=bound)),
                        bias: Tensor::filled([cout], bias_init),
                    }
                }
                StageKind::Fc => {
                    let (n_in, n_out) = (l.input.0, l.output.0);
                    let bound = glorot_bound(n_in, n_out);
                    Layer::Fc {
                        weights: Tensor::from_fn([n_out, n_in], |_| r.random_range(-bound..=bound)),
                        bias: Tensor::filled([n_out], bias_init),
                    }
                }
                StageKind::Relu => Layer::Relu,
                StageKind::Pool => Layer::Pool { window: l.filter },
            };
            layers.push(layer);
        }
        Ok(Model {
            config: config.clone(),
            layers,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        let (h, w) = self.config.input_size;
        [self.config.input_channels, h, w]
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .all(|(w, b)| w.is_finite() && b.is_finite())
    }

    pub fn forward(&self, input: &Tensor) -> Result<ForwardCache> {
        if input.shape() != self.input_shape() {
            return Err(Error::shape("model input", input.shape(), &self.input_shape()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        inputs.push(input.clone());
        for layer in &self.layers {
            let x = inputs.last().expect("non-empty");
            let mut routes = None;
            let y = match layer {
                Layer::Conv { weights, bias } => conv_forward(x, weights, bias, 1, same_padding(weights.shape()[2]))?,
                Layer::Fc { weights, bias } => fc_forward(x, weights, bias)?,
                Layer::Relu => relu(x),
                Layer::Pool { window } => {
                    let p = max_pool(x, *window, *window)?;
                    routes = Some(p.argmax);
                    p.output
                }
            };
            argmax.push(routes);
            inputs.push(y);
        }
        Ok(ForwardCache { inputs, argmax })
    }

    pub fn predict(&self, input: &Tensor) -> Result<usize> {
        Ok(self.forward(input)?.output().argmax())
    }

    /// Backpropagates the quadratic-cost error from `target` and returns the
    /// `δ` of every trainable layer.
    pub fn backward(&self, cache: &ForwardCache, target: &Tensor) -> Result<LayerDeltas> {
        self.backward_from(cache, cache.output().sub(target)?)
    }

    /// Backpropagates an arbitrary gradient with respect to the output.
    pub fn backward_from(&self, cache: &ForwardCache, grad_output: Tensor) -> Result<LayerDeltas> {
        let mut deltas: LayerDeltas = vec![None; self.layers.len()];
        let mut g = grad_output;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            g = match layer {
                Layer::Relu => g.zip_map(x, "relu backward", |gv, zv| gv * relu_derivative_scalar(zv))?,
                Layer::Pool { .. } => {
                    let routes = cache.argmax[i].as_ref().ok_or_else(|| Error::param("cache", "missing pool routes"))?;
                    max_pool_backward(&g, routes, x.shape())?
                }
                Layer::Conv { weights, .. } => {
                    let back = conv_backward_input(&g, weights, x.shape(), 1, same_padding(weights.shape()[2]))?;
                    deltas[i] = Some(g);
                    back
                }
                Layer::Fc { weights, .. } => {
                    let back = fc_backward_input(&g, weights)?.reshape(x.shape().to_vec())?;
                    deltas[i] = Some(g);
                    back
                }
            };
        }
        Ok(deltas)
    }

    /// One mini-batch of gradient descent.
    pub fn train_batch(&mut self, batch: &[(&Tensor, usize)], params: &TrainParams) -> Result<BatchStats> {
        if batch.is_empty() {
            return Err(Error::param("batch", "empty mini-batch"));
        }
        let n = self.layers.len();
        let mut deltas: Vec<Vec<Tensor>> = vec![Vec::new(); n];
        let mut acts: Vec<Vec<Tensor>> = vec![Vec::new(); n];
        let mut stats = BatchStats::default();
        for (x, label) in batch {
            let cache = self.forward(x)?;
            let target = encode_target(*label, self.config.num_classes, params.target_low)?;
            stats.loss += quadratic_loss(cache.output(), &target);
            stats.correct += usize::from(cache.output().argmax() == *label);
            let d = self.backward(&cache, &target)?;
            for (i, di) in d.into_iter().enumerate() {
                if let Some(di) = di {
                    deltas[i].push(di);
                    acts[i].push(cache.inputs[i].clone());
                }
            }
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Some((w, b)) = layer.params_mut() {
                let (nw, nb) = sgd_update(w, b, &deltas[i], &acts[i], params)?;
                *w = nw;
                *b = nb;
            }
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::network::{Stage, NetworkConfig};
    use alloc::string::ToString;

    fn tiny_net() -> NetworkConfig {
        NetworkConfig {
            name: "tiny".to_string(),
            stages: vec![
                Stage::conv(3, 2, 1),
                Stage::relu(),
                Stage::pool(2),
                Stage::fc(3, 1),
                Stage::relu(),
            ],
            input_size: (4, 4),
            input_channels: 1,
            num_classes: 3,
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Model::init(&tiny_net(), 7, 0.0).unwrap();
        let b = Model::init(&tiny_net(), 7, 0.0).unwrap();
        let c = Model::init(&tiny_net(), 8, 0.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let (w, _) = a.layers[0].params().unwrap();
        let bound = glorot_bound(9, 18);
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_loss_sample_has_zero_deltas() {
        let m = Model::init(&tiny_net(), 1, 0.0).unwrap();
        let x = Tensor::filled([1, 4, 4], 0.5);
        let cache = m.forward(&x).unwrap();
        let target = cache.output().clone();
        let d = m.backward(&cache, &target).unwrap();
        assert!(d.iter().flatten().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        assert!(one_hot(3, 3).is_err());
        assert_eq!(one_hot(1, 3).unwrap().data(), &[0.0, 1.0, 0.0]);
    }
}
