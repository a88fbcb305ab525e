//! Analog backpropagation: error modulation, the transposed product per
//! waveguide gated by the ReLU derivative, and batched conductance updates.

use alloc::vec;
use alloc::vec::Vec;

use super::conductance::{commit, ConductanceState};
use super::exec::PhotonicSignal;
use super::sites::{self, PhotodiodeSums};
use crate::cnn::ops::{conv_backward_input, fc_backward_input, layer_gradient, max_pool_backward, relu_derivative_scalar, same_padding};
use crate::cnn::{ForwardCache, Layer, LayerDeltas, Model, TrainParams};
use crate::error::{Error, Result};
use crate::noise::{gaussian, snr_sigma, NoiseCounters, NoiseModel, Site};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Distinguishes backward-pass streams from forward-pass ones.
const BACKWARD: u64 = 0xb;

pub fn backward_stream(noise: &NoiseModel, context: u64, layer: usize, site: Site) -> Stream {
    rng::stream(noise.rng_seed, &[rng::tag::NOISE, context, layer as u64, site as u64, BACKWARD])
}

/// Error signals after modulation and the equal split.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSignals {
    pub update: Vec<PhotonicSignal>,
    pub multiplex: Vec<PhotonicSignal>,
}

/// Modulates each error component onto its own wavelength and splits the
/// light into the weight-update and multiplex branches. Each branch carries
/// half the power; the receiver gain restores unit scale.
pub fn modulate_error(delta: &Tensor, n_wavelengths: usize, noise: &NoiseModel, rng: &mut Stream) -> Result<ErrorSignals> {
    if delta.len() != n_wavelengths {
        return Err(Error::shape("modulate_error", delta.shape(), &[n_wavelengths]));
    }
    let sigma = snr_sigma(sites::mean_square(delta.data()), noise.snr_db(Site::Md));
    let mut update = Vec::with_capacity(n_wavelengths);
    let mut multiplex = Vec::with_capacity(n_wavelengths);
    for (j, &d) in delta.data().iter().enumerate() {
        let mut v = d;
        if sigma > 0.0 {
            v += sigma * gaussian(rng);
        }
        let half = v / 2.0;
        update.push(PhotonicSignal {
            wavelength_index: j,
            value: half * 2.0,
        });
        multiplex.push(PhotonicSignal {
            wavelength_index: j,
            value: half * 2.0,
        });
    }
    Ok(ErrorSignals { update, multiplex })
}

fn transpose_sums(delta_next: &Tensor, weights_next: &Tensor, z_shape: &[usize]) -> Result<PhotodiodeSums> {
    match weights_next.rank() {
        2 => {
            let (n_out, n_in) = (weights_next.shape()[0], weights_next.shape()[1]);
            if n_in != z_shape.iter().product::<usize>() {
                return Err(Error::shape("backprop_layer_photonic", weights_next.shape(), z_shape));
            }
            let sums = fc_backward_input(delta_next, weights_next)?.into_data();
            let mut square = 0.0;
            for (row, d) in weights_next.data().chunks_exact(n_in).zip(delta_next.data()) {
                square += row.iter().map(|w| (w * d) * (w * d)).sum::<f64>();
            }
            Ok(PhotodiodeSums {
                sums,
                terms: vec![n_out as u32; n_in],
                term_square_sum: square,
            })
        }
        4 => {
            let p = same_padding(weights_next.shape()[2]);
            let sums = conv_backward_input(delta_next, weights_next, z_shape, 1, p)?.into_data();
            let sq = conv_backward_input(&delta_next.map(|v| v * v), &weights_next.map(|v| v * v), z_shape, 1, p)?;
            let ones_d = Tensor::filled(delta_next.shape().to_vec(), 1.0);
            let ones_w = Tensor::filled(weights_next.shape().to_vec(), 1.0);
            let counts = conv_backward_input(&ones_d, &ones_w, z_shape, 1, p)?;
            Ok(PhotodiodeSums {
                sums,
                terms: counts.data().iter().map(|&c| c as u32).collect(),
                term_square_sum: sq.sum(),
            })
        }
        _ => Err(Error::shape("backprop_layer_photonic", weights_next.shape(), z_shape)),
    }
}

/// `δˡ = ((wˡ⁺¹)ᵀ·δˡ⁺¹) ⊙ σ′(zˡ)` on the photonic path: each waveguide sums
/// the error-weighted wavelengths of one receiving neuron.
pub fn backprop_layer_photonic(
    delta_next: &Tensor,
    weights_next: &Tensor,
    z: &Tensor,
    noise: &NoiseModel,
    rng: &mut Stream,
) -> Result<(Tensor, NoiseCounters)> {
    let read = transpose_sums(delta_next, weights_next, z.shape())?;
    let (sums, saturations) = sites::photodiode(read, noise, rng);
    let data = sums
        .iter()
        .zip(z.data())
        .map(|(s, &zv)| s * relu_derivative_scalar(zv))
        .collect();
    Ok((
        Tensor::new(z.shape().to_vec(), data)?,
        NoiseCounters {
            saturations,
            ..NoiseCounters::default()
        },
    ))
}

/// Full backward pass with the weights read before any commit. Returns the
/// `δ` of every trainable layer.
pub fn backward_pass_photonic(
    model: &Model,
    conductances: &ConductanceState,
    cache: &ForwardCache,
    target: &Tensor,
    noise: &NoiseModel,
    context: u64,
) -> Result<(LayerDeltas, NoiseCounters)> {
    let mut counters = NoiseCounters::default();
    let out = cache.output();
    out.expect_same_shape(target, "backward_pass_photonic")?;
    let n = model.layers.len();
    let mut deltas: LayerDeltas = vec![None; n];
    // analog subtraction, then modulation of the error onto the carriers
    let diff = out.sub(target)?;
    let mut r = backward_stream(noise, context, n, Site::Md);
    let signals = modulate_error(&diff, diff.len(), noise, &mut r)?;
    let mut g = Tensor::new(diff.shape().to_vec(), signals.multiplex.iter().map(|s| s.value).collect())?;
    let mut i = n;
    while i > 0 {
        i -= 1;
        let x = &cache.inputs[i];
        match &model.layers[i] {
            Layer::Relu => {
                let gated = g.zip_map(x, "relu derivative", |gv, zv| gv * relu_derivative_scalar(zv))?;
                g = gated;
            }
            Layer::Pool { .. } => {
                let routes = cache.argmax[i].as_ref().ok_or_else(|| Error::param("cache", "missing pool routes"))?;
                g = max_pool_backward(&g, routes, x.shape())?;
            }
            Layer::Conv { .. } | Layer::Fc { .. } => {
                let stored = conductances
                    .get(i)
                    .ok_or_else(|| Error::param("conductances", alloc::format!("no conductances for layer {i}")))?;
                deltas[i] = Some(g.clone());
                if i == 0 {
                    break;
                }
                let mut ri = backward_stream(noise, context, i, Site::Interface);
                let w = sites::interface_read(&stored.weights(), noise, &mut ri);
                // The σ′ gate belongs to the receiving layer; ReLU layers apply
                // it below, so read the transposed product ungated here.
                let ones = Tensor::filled(x.shape().to_vec(), 1.0);
                let mut rm = backward_stream(noise, context, i, Site::Md);
                let (back, c) = backprop_layer_photonic(&g, &w, &ones, noise, &mut rm)?;
                counters.merge(c);
                g = back;
            }
        }
    }
    Ok((deltas, counters))
}

/// Flattened per-sample gradient in conductance layout (kernel row, then bias).
pub fn flat_gradient(delta: &Tensor, activation_prev: &Tensor, weights: &Tensor) -> Result<Vec<f64>> {
    let (dw, db) = layer_gradient(delta, activation_prev, weights)?;
    let rows = db.len();
    let fan_in = dw.len() / rows.max(1);
    let mut out = Vec::with_capacity(rows * (fan_in + 1));
    for (row, b) in dw.data().chunks_exact(fan_in.max(1)).zip(db.data()) {
        out.extend_from_slice(row);
        out.push(*b);
    }
    Ok(out)
}

/// Commits one mini-batch: `C ← C − (η/m)·Σₓ δˣ·Oˣ` per cell. Products pick
/// up microdisk noise, the accumulated update picks up interface noise, and
/// the result is quantized and clamped. All deltas must have been computed
/// from the pre-batch conductances.
pub fn commit_batch(
    conductances: &mut ConductanceState,
    gradients: &[(usize, Vec<Vec<f64>>)],
    params: &TrainParams,
    noise: &NoiseModel,
    context: u64,
) -> Result<NoiseCounters> {
    let mut counters = NoiseCounters::default();
    for (layer, samples) in gradients {
        let m = samples.len();
        if m == 0 {
            return Err(Error::param("batch", "commit_batch needs at least one sample"));
        }
        let cell = conductances
            .get_mut(*layer)
            .ok_or_else(|| Error::param("conductances", alloc::format!("no conductances for layer {layer}")))?;
        let n = cell.values.len();
        if samples.iter().any(|s| s.len() != n) {
            return Err(Error::shape("commit_batch", &[n], &[samples[0].len()]));
        }
        let mut acc = vec![0.0; n];
        let mut square = 0.0;
        for s in samples {
            for (a, v) in acc.iter_mut().zip(s) {
                *a += v;
                square += v * v;
            }
        }
        let sigma_md = snr_sigma(square / (m * n) as f64, noise.snr_db(Site::Md));
        if sigma_md > 0.0 {
            let mut r = backward_stream(noise, context, *layer, Site::Md);
            let spread = sigma_md * libm::sqrt(m as f64);
            for a in acc.iter_mut() {
                *a += spread * gaussian(&mut r);
            }
        }
        let scale = params.learning_rate / m as f64;
        let mut steps: Vec<f64> = acc.iter().map(|a| scale * a).collect();
        let mut ri = backward_stream(noise, context, *layer, Site::Interface);
        sites::add_relative_noise(&mut steps, noise.snr_db(Site::Interface), &mut ri);
        for (c, step) in cell.values.iter_mut().zip(&steps) {
            let u = commit(*c, *step, cell.range, cell.states)?;
            if u.stuck {
                counters.stuck_updates += 1;
            }
            *c = u.value;
        }
    }
    Ok(counters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::ops::backward_layer;
    use rand::Rng;

    #[test]
    fn zero_error_modulates_to_zero() {
        let mut r = rng::stream(0, &[]);
        let s = modulate_error(&Tensor::zeros([49]), 49, &NoiseModel::default(), &mut r).unwrap();
        assert!(s.update.iter().chain(&s.multiplex).all(|p| p.value == 0.0));
        assert!(modulate_error(&Tensor::zeros([48]), 49, &NoiseModel::off(), &mut r).is_err());
    }

    #[test]
    fn fc_transpose_matches_golden() {
        let mut r = rng::stream(1, &[]);
        let w = Tensor::from_fn([8, 16], |_| r.random_range(-1.0..1.0));
        let d = Tensor::from_fn([8], |_| r.random_range(-1.0..1.0));
        let z = Tensor::from_fn([16], |_| r.random_range(-1.0..1.0));
        let (p, _) = backprop_layer_photonic(&d, &w, &z, &NoiseModel::off(), &mut r).unwrap();
        let g = backward_layer(&d, &w, &z).unwrap();
        assert!(crate::tensor::max_relative_error(p.data(), g.data(), 1e-12) <= 1e-9);
    }
}
