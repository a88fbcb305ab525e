//! Noise sites shared by every photonic kernel.
//!
//! Stored values (weights, activations) pass through the memristor and the
//! memristor→modulator interface; summed light passes through the waveguide
//! and the photodiode. Microdisk noise is injected per modulated term and
//! aggregated exactly at the photodiode: `n` independent terms of variance
//! `σ²` sum to one Gaussian of variance `n·σ²`.

use alloc::vec::Vec;

use crate::error::Result;
use crate::noise::{self, gaussian, snr_sigma, NoiseModel, Site};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Stream for one site of one layer of one evaluation context.
pub fn site_stream(noise: &NoiseModel, context: u64, layer: usize, site: Site) -> Stream {
    rng::stream(noise.rng_seed, &[rng::tag::NOISE, context, layer as u64, site as u64])
}

/// Quantizes a stored tensor to the memristor grid over `[-m, m]`.
pub fn memristor_store(t: &Tensor, noise: &NoiseModel) -> Result<Tensor> {
    let mut out = t.clone();
    if noise.enabled(Site::Memristor) {
        noise::quantize_symmetric(out.data_mut(), u64::from(noise.memristor_states))?;
    }
    Ok(out)
}

/// DAC at the datapath entry, over a fixed `[lo, hi]` range.
pub fn dac_fixed(t: &Tensor, lo: f64, hi: f64, noise: &NoiseModel) -> Result<Tensor> {
    if !noise.enabled(Site::Dac) {
        return Ok(t.clone());
    }
    let mut out = t.clone();
    for v in out.data_mut() {
        *v = noise::convert_dac(*v, noise.dac_bits, lo, hi)?;
    }
    Ok(out)
}

/// DAC over the symmetric range `[-m, m]`, `m = max|x|`.
pub fn dac_symmetric(values: &mut [f64], noise: &NoiseModel) -> Result<()> {
    if noise.enabled(Site::Dac) {
        noise::quantize_symmetric(values, 1u64 << noise.dac_bits)?;
    }
    Ok(())
}

/// ADC at the datapath exit over `[-r, r]`, `r = max|y|`.
pub fn adc_output(t: &Tensor, noise: &NoiseModel) -> Result<Tensor> {
    let mut out = t.clone();
    if noise.enabled(Site::Adc) {
        noise::quantize_symmetric(out.data_mut(), 1u64 << noise.adc_bits)?;
    }
    Ok(out)
}

/// Adds Gaussian noise at `snr_db` relative to the mean square of `values`.
pub fn add_relative_noise(values: &mut [f64], snr_db: f64, rng: &mut Stream) {
    let p_ref = mean_square(values);
    let sigma = snr_sigma(p_ref, snr_db);
    if sigma > 0.0 {
        for v in values.iter_mut() {
            *v += sigma * gaussian(rng);
        }
    }
}

/// Memristor→modulator transfer of stored values.
pub fn interface_read(t: &Tensor, noise: &NoiseModel, rng: &mut Stream) -> Tensor {
    let mut out = t.clone();
    add_relative_noise(out.data_mut(), noise.snr_db(Site::Interface), rng);
    out
}

/// OPAMP (ReLU or pooling comparator) output noise.
pub fn opamp(t: &mut Tensor, noise: &NoiseModel, rng: &mut Stream) {
    add_relative_noise(t.data_mut(), noise.snr_db(Site::Opamp), rng);
}

pub fn mean_square(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

/// Clean photodiode sums of one layer with the bookkeeping needed for
/// microdisk noise: terms per sum and the total power of all terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotodiodeSums {
    pub sums: Vec<f64>,
    pub terms: Vec<u32>,
    pub term_square_sum: f64,
}

impl PhotodiodeSums {
    /// Mean square of one modulated term.
    pub fn term_power(&self) -> f64 {
        let n: u64 = self.terms.iter().map(|&t| u64::from(t)).sum();
        if n == 0 {
            return 0.0;
        }
        self.term_square_sum / n as f64
    }
}

/// Photodiode read: attenuation over the waveguide, detector-referred
/// microdisk noise, transimpedance gain back to unit scale, conditioning
/// clamp. Returns the noisy sums and the number of saturated values.
pub fn photodiode(read: PhotodiodeSums, noise: &NoiseModel, rng: &mut Stream) -> (Vec<f64>, u64) {
    let sigma_t = snr_sigma(read.term_power(), noise.snr_db(Site::Md));
    let alpha = noise.path_attenuation();
    let mut sums = read.sums;
    if sigma_t == 0.0 && alpha == 1.0 {
        return (sums, 0);
    }
    let limit = noise.clip * sums.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (s, &n) in sums.iter_mut().zip(&read.terms) {
        let mut v = *s * alpha;
        if sigma_t > 0.0 {
            v += sigma_t * libm::sqrt(f64::from(n)) * gaussian(rng);
        }
        *s = v / alpha;
    }
    let saturated = noise::condition(&mut sums, limit, noise.smoothing);
    (sums, saturated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disabled_sites_are_identity() {
        let off = NoiseModel::off();
        let t = Tensor::vector(alloc::vec![0.123, -4.5, 7.0]);
        let mut r = site_stream(&off, 0, 0, Site::Md);
        assert_eq!(memristor_store(&t, &off).unwrap(), t);
        assert_eq!(dac_fixed(&t, 0.0, 1.0, &off).unwrap(), t);
        assert_eq!(adc_output(&t, &off).unwrap(), t);
        assert_eq!(interface_read(&t, &off, &mut r), t);
        let mut o = t.clone();
        opamp(&mut o, &off, &mut r);
        assert_eq!(o, t);
        let read = PhotodiodeSums {
            sums: t.data().to_vec(),
            terms: alloc::vec![9, 9, 9],
            term_square_sum: 3.0,
        };
        assert_eq!(photodiode(read, &off, &mut r), (t.data().to_vec(), 0));
    }

    #[test]
    fn zero_terms_produce_no_noise() {
        let n = NoiseModel::default();
        let mut r = site_stream(&n, 0, 0, Site::Md);
        let read = PhotodiodeSums {
            sums: alloc::vec![0.0; 4],
            terms: alloc::vec![9; 4],
            term_square_sum: 0.0,
        };
        assert_eq!(photodiode(read, &n, &mut r).0, alloc::vec![0.0; 4]);
    }
}
