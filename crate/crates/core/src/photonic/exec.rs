//! Evaluation of photonic convolutions and matrix-vector products.
//!
//! [`pconv_sums`] and [`mvm_sums`] walk the plans wavelength by wavelength.
//! [`conv_sums`] and [`fc_sums`] produce the same photodiode sums and term
//! bookkeeping with dense kernels; the datapath uses them for speed and the
//! tests hold the two in agreement.

use alloc::vec;
use alloc::vec::Vec;

use super::plan::{MvmPlan, PhotonicConvPlan};
use super::sites::{self, PhotodiodeSums};
use crate::cnn::ops::{conv_forward, fc_forward};
use crate::error::{Error, Result};
use crate::noise::{NoiseCounters, NoiseModel, Site};
use crate::rng::Stream;
use crate::tensor::Tensor;

/// Modulated amplitude on one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonicSignal {
    pub wavelength_index: usize,
    pub value: f64,
}

/// Plan-driven sums. `pixels` is `C×H×W`, `weights` is `F×C×k×k`; each
/// output reads one wavelength group per input channel plus an always-on
/// bias wavelength.
pub fn pconv_sums(plan: &PhotonicConvPlan, pixels: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<PhotodiodeSums> {
    let (h, w) = plan.input_size;
    let k = plan.filter;
    let ps = pixels.shape();
    let ws = weights.shape();
    if ps.len() != 3 || ps[1] != h || ps[2] != w {
        return Err(Error::shape("execute_pconv pixels", ps, &[h, w]));
    }
    let c_in = ps[0];
    if ws != [plan.n_filters, c_in, k, k] {
        return Err(Error::shape("execute_pconv weights", ws, &[plan.n_filters, c_in, k, k]));
    }
    if bias.len() != plan.n_filters {
        return Err(Error::shape("execute_pconv bias", bias.shape(), &[plan.n_filters]));
    }
    let (ho, wo) = plan.output_size;
    let amp = plan.carrier_amplitude;
    let mut sums = vec![0.0; plan.n_filters * ho * wo];
    let mut terms = vec![0u32; sums.len()];
    let mut square = 0.0;
    for ch in &plan.channels {
        let f = ch.filter;
        for (g, out) in ch.outputs.iter().enumerate() {
            let Some((y, x)) = *out else { continue };
            let idx = (f * ho + y) * wo + x;
            let b = bias.data()[f];
            // photodiode current carries A·A; divide the carrier back out
            let mut acc = b * amp * amp;
            let mut n = 1;
            square += b * b;
            for c in 0..c_in {
                let plane = &pixels.data()[c * h * w..(c + 1) * h * w];
                let kern = &weights.data()[(f * c_in + c) * k * k..(f * c_in + c + 1) * k * k];
                for tap in &ch.taps[g * plan.group_size..(g + 1) * plan.group_size] {
                    if let Some(p) = tap.pixel {
                        let t = kern[tap.weight] * plane[p];
                        acc += (t * amp) * amp;
                        square += t * t;
                        n += 1;
                    }
                }
            }
            sums[idx] = acc / (amp * amp);
            terms[idx] = n;
        }
    }
    Ok(PhotodiodeSums {
        sums,
        terms,
        term_square_sum: square,
    })
}

/// Dense equivalent of [`pconv_sums`] for any input size.
pub fn conv_sums(pixels: &Tensor, weights: &Tensor, bias: &Tensor, padding: usize) -> Result<PhotodiodeSums> {
    let z = conv_forward(pixels, weights, bias, 1, padding)?;
    let sq_w = weights.map(|v| v * v);
    let sq_x = pixels.map(|v| v * v);
    let zero_bias = Tensor::zeros([weights.shape()[0]]);
    let sq = conv_forward(&sq_x, &sq_w, &zero_bias, 1, padding)?;
    let (f, ho, wo) = (z.shape()[0], z.shape()[1], z.shape()[2]);
    let (c_in, h, w, k) = (pixels.shape()[0], pixels.shape()[1], pixels.shape()[2], weights.shape()[2]);
    let valid = |o: usize, n: usize| (0..k).filter(|&i| (o + i).checked_sub(padding).is_some_and(|p| p < n)).count();
    let vy: Vec<usize> = (0..ho).map(|y| valid(y, h)).collect();
    let vx: Vec<usize> = (0..wo).map(|x| valid(x, w)).collect();
    let mut terms = Vec::with_capacity(f * ho * wo);
    for _ in 0..f {
        for &a in &vy {
            for &b in &vx {
                terms.push((c_in * a * b + 1) as u32);
            }
        }
    }
    let bias_sq: f64 = bias.data().iter().map(|b| b * b).sum::<f64>() * (ho * wo) as f64;
    Ok(PhotodiodeSums {
        sums: z.into_data(),
        terms,
        term_square_sum: sq.sum() + bias_sq,
    })
}

/// Plan-driven matrix-vector sums: one photodiode per input segment, the
/// segment sums of an output neuron added together.
pub fn mvm_sums(plan: &MvmPlan, features: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<PhotodiodeSums> {
    if weights.shape() != [plan.n_outputs, plan.n_inputs] || features.len() != plan.n_inputs {
        return Err(Error::shape("fc_mvm", features.shape(), weights.shape()));
    }
    if bias.len() != plan.n_outputs {
        return Err(Error::shape("fc_mvm bias", bias.shape(), &[plan.n_outputs]));
    }
    let x = features.data();
    let mut sums = Vec::with_capacity(plan.n_outputs);
    let mut square = 0.0;
    for (o, row) in weights.data().chunks_exact(plan.n_inputs).enumerate() {
        let b = bias.data()[o];
        square += b * b;
        let mut total = b;
        for (seg_w, seg_x) in row.chunks(plan.segment).zip(x.chunks(plan.segment)) {
            let mut pd = 0.0;
            for (wv, xv) in seg_w.iter().zip(seg_x) {
                let t = wv * xv;
                pd += t;
                square += t * t;
            }
            total += pd;
        }
        sums.push(total);
    }
    Ok(PhotodiodeSums {
        sums,
        terms: vec![(plan.n_inputs + 1) as u32; plan.n_outputs],
        term_square_sum: square,
    })
}

/// Dense equivalent of [`mvm_sums`].
pub fn fc_sums(features: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<PhotodiodeSums> {
    let y = fc_forward(features, weights, bias)?;
    let n_in = features.len();
    let x = features.data();
    let mut square: f64 = bias.data().iter().map(|b| b * b).sum();
    for row in weights.data().chunks_exact(n_in) {
        square += row.iter().zip(x).map(|(w, v)| (w * v) * (w * v)).sum::<f64>();
    }
    Ok(PhotodiodeSums {
        terms: vec![(n_in + 1) as u32; y.len()],
        sums: y.into_data(),
        term_square_sum: square,
    })
}

fn read_stored(t: &Tensor, noise: &NoiseModel, rng: &mut Stream) -> Result<Tensor> {
    Ok(sites::interface_read(&sites::memristor_store(t, noise)?, noise, rng))
}

/// Photonic convolution of one tile: stored pixels and weights are read
/// through the memristor and interface sites, summed per photodiode group,
/// then detected with microdisk noise and propagation loss.
pub fn execute_pconv(
    plan: &PhotonicConvPlan,
    pixels: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    noise: &NoiseModel,
    rng: &mut Stream,
) -> Result<(Tensor, NoiseCounters)> {
    let x = read_stored(pixels, noise, rng)?;
    let w = read_stored(weights, noise, rng)?;
    let b = read_stored(bias, noise, rng)?;
    let read = pconv_sums(plan, &x, &w, &b)?;
    let (sums, saturations) = sites::photodiode(read, noise, rng);
    let (ho, wo) = plan.output_size;
    Ok((
        Tensor::new([plan.n_filters, ho, wo], sums)?,
        NoiseCounters {
            saturations,
            ..NoiseCounters::default()
        },
    ))
}

/// Fully-connected layer on the microdisk matrix-vector multiplier.
pub fn fc_mvm(
    plan: &MvmPlan,
    features: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    noise: &NoiseModel,
    rng: &mut Stream,
) -> Result<(Tensor, NoiseCounters)> {
    let x = read_stored(&features.clone().flatten(), noise, rng)?;
    let w = read_stored(weights, noise, rng)?;
    let b = read_stored(bias, noise, rng)?;
    let read = mvm_sums(plan, &x, &w, &b)?;
    let (sums, saturations) = sites::photodiode(read, noise, rng);
    Ok((
        Tensor::vector(sums),
        NoiseCounters {
            saturations,
            ..NoiseCounters::default()
        },
    ))
}

/// Whether any site would perturb a photodiode read.
pub fn photodiode_is_ideal(noise: &NoiseModel) -> bool {
    !noise.enabled(Site::Md) && !noise.enabled(Site::Propagation)
}
