//! End-to-end photonic execution of a model: programmed conductances, the
//! noisy forward pass, and training through the analog backward path.

use alloc::vec;
use alloc::vec::Vec;

use super::backprop::{backward_pass_photonic, commit_batch, flat_gradient};
use super::conductance::ConductanceState;
use super::exec::{conv_sums, fc_sums};
use super::sites::{self, site_stream};
use crate::cnn::ops::{max_pool, relu, same_padding};
use crate::cnn::{encode_target, BatchStats, quadratic_loss, ForwardCache, Layer, Model, TrainParams};
use crate::error::{Error, Result};
use crate::noise::{NoiseCounters, NoiseModel, Site};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct PhotonicModel {
    pub model: Model,
    pub conductances: ConductanceState,
    pub noise: NoiseModel,
    weights: Vec<Option<(Tensor, Tensor)>>,
}

impl PhotonicModel {
    /// Programs the weights of `model` into memristor conductances.
    pub fn program(model: &Model, noise: &NoiseModel) -> Result<Self> {
        noise.validate()?;
        let conductances = ConductanceState::program(model, noise)?;
        let mut pm = PhotonicModel {
            model: model.clone(),
            conductances,
            noise: noise.clone(),
            weights: Vec::new(),
        };
        pm.refresh();
        Ok(pm)
    }

    fn refresh(&mut self) {
        self.weights = (0..self.model.layers.len())
            .map(|i| self.conductances.get(i).map(|c| (c.weights(), c.bias())))
            .collect();
    }

    /// The model with the currently stored conductances as weights.
    pub fn to_model(&self) -> Result<Model> {
        let mut m = self.model.clone();
        self.conductances.write_into(&mut m)?;
        Ok(m)
    }

    /// Noisy forward pass. `context` keys the noise streams (e.g. a sample id).
    pub fn forward(&self, input: &Tensor, context: u64) -> Result<(ForwardCache, NoiseCounters)> {
        let model = &self.model;
        if input.shape() != model.input_shape() {
            return Err(Error::shape("photonic input", input.shape(), &model.input_shape()));
        }
        let noise = &self.noise;
        let mut counters = NoiseCounters::default();
        let mut inputs = Vec::with_capacity(model.layers.len() + 1);
        let mut argmax = Vec::with_capacity(model.layers.len());
        let mut x = sites::dac_fixed(input, 0.0, 1.0, noise)?;
        for (i, layer) in model.layers.iter().enumerate() {
            let mut routes = None;
            let y = match layer {
                Layer::Conv { .. } | Layer::Fc { .. } => {
                    let (w, b) = self.weights[i].as_ref().expect("trainable layer is programmed");
                    let mut ri = site_stream(noise, context, i, Site::Interface);
                    x = sites::interface_read(&sites::memristor_store(&x, noise)?, noise, &mut ri);
                    let w = sites::interface_read(w, noise, &mut ri);
                    let b = sites::interface_read(b, noise, &mut ri);
                    let read = if matches!(layer, Layer::Conv { .. }) {
                        conv_sums(&x, &w, &b, same_padding(w.shape()[2]))?
                    } else {
                        fc_sums(&x, &w, &b)?
                    };
                    let shape = if matches!(layer, Layer::Conv { .. }) {
                        let (h, wd) = (x.shape()[1], x.shape()[2]);
                        vec![w.shape()[0], h, wd]
                    } else {
                        vec![w.shape()[0]]
                    };
                    let mut rm = site_stream(noise, context, i, Site::Md);
                    let (sums, sat) = sites::photodiode(read, noise, &mut rm);
                    counters.saturations += sat;
                    Tensor::new(shape, sums)?
                }
                Layer::Relu => {
                    let mut y = relu(&x);
                    sites::opamp(&mut y, noise, &mut site_stream(noise, context, i, Site::Opamp));
                    y
                }
                Layer::Pool { window } => {
                    let p = max_pool(&x, *window, *window)?;
                    routes = Some(p.argmax);
                    let mut y = p.output;
                    sites::opamp(&mut y, noise, &mut site_stream(noise, context, i, Site::Opamp));
                    y
                }
            };
            inputs.push(x);
            argmax.push(routes);
            x = y;
        }
        inputs.push(sites::adc_output(&x, noise)?);
        Ok((ForwardCache { inputs, argmax }, counters))
    }

    pub fn predict(&self, input: &Tensor, context: u64) -> Result<usize> {
        Ok(self.forward(input, context)?.0.output().argmax())
    }

    /// One mini-batch through the photonic forward and backward paths.
    /// Every sample reads the pre-batch conductances; the batch commits once.
    pub fn train_batch(&mut self, batch: &[(&Tensor, usize, u64)], params: &TrainParams) -> Result<(BatchStats, NoiseCounters)> {
        if batch.is_empty() {
            return Err(Error::param("batch", "empty mini-batch"));
        }
        let mut counters = NoiseCounters::default();
        let n = self.model.layers.len();
        let mut grads: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
        let mut stats = BatchStats::default();
        for (x, label, ctx) in batch {
            let (cache, c) = self.forward(x, *ctx)?;
            counters.merge(c);
            let target = encode_target(*label, self.model.config.num_classes, params.target_low)?;
            stats.loss += quadratic_loss(cache.output(), &target);
            stats.correct += usize::from(cache.output().argmax() == *label);
            let (deltas, c) = backward_pass_photonic(&self.model, &self.conductances, &cache, &target, &self.noise, *ctx)?;
            counters.merge(c);
            for (i, d) in deltas.into_iter().enumerate() {
                if let Some(d) = d {
                    let (w, _) = self.weights[i].as_ref().expect("trainable layer is programmed");
                    grads[i].push(flat_gradient(&d, &cache.inputs[i], w)?);
                }
            }
        }
        let per_layer: Vec<(usize, Vec<Vec<f64>>)> = grads
            .into_iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty())
            .collect();
        let commit_ctx = batch[0].2;
        counters.merge(commit_batch(&mut self.conductances, &per_layer, params, &self.noise, commit_ctx)?);
        self.refresh();
        Ok((stats, counters))
    }
}
