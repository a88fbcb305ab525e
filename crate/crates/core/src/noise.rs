//! Analog non-idealities of the photonic datapath.
//!
//! Each transform is attached to a named [`Site`]. A [`NoiseModel`] with no
//! enabled sites is the identity everywhere.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Site {
    Dac,
    Adc,
    Memristor,
    Md,
    Opamp,
    Interface,
    Propagation,
}

impl Site {
    pub const ALL: [Site; 7] = [
        Site::Dac,
        Site::Adc,
        Site::Memristor,
        Site::Md,
        Site::Opamp,
        Site::Interface,
        Site::Propagation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Site::Dac => "dac",
            Site::Adc => "adc",
            Site::Memristor => "memristor",
            Site::Md => "md",
            Site::Opamp => "opamp",
            Site::Interface => "interface",
            Site::Propagation => "propagation",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Site::ALL
            .into_iter()
            .find(|site| site.name() == s)
            .ok_or_else(|| Error::param("site", alloc::format!("unknown noise site `{s}`")))
    }
}

/// A set of [`Site`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SiteSet(u8);

impl SiteSet {
    pub const NONE: SiteSet = SiteSet(0);
    pub const ALL: SiteSet = SiteSet(0x7f);

    pub fn only(site: Site) -> Self {
        SiteSet(site.bit())
    }

    pub fn contains(self, site: Site) -> bool {
        self.0 & site.bit() != 0
    }

    pub fn with(self, site: Site) -> Self {
        SiteSet(self.0 | site.bit())
    }

    pub fn without(self, site: Site) -> Self {
        SiteSet(self.0 & !site.bit())
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Site> {
        Site::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl FromIterator<Site> for SiteSet {
    fn from_iter<I: IntoIterator<Item = Site>>(iter: I) -> Self {
        iter.into_iter().fold(SiteSet::NONE, SiteSet::with)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for SiteSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for SiteSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let sites = <Vec<Site> as serde::Deserialize>::deserialize(d)?;
        Ok(sites.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NoiseModel {
    pub dac_bits: u32,
    pub adc_bits: u32,
    pub memristor_states: u32,
    pub snr_md_db: f64,
    pub snr_opamp_db: f64,
    pub snr_interface_db: f64,
    pub prop_loss_db_per_cm: f64,
    pub path_length_cm: f64,
    pub enabled_sites: SiteSet,
    pub rng_seed: u64,
    /// Modulator range, as a multiple of the layer's largest clean magnitude.
    pub clip: f64,
    /// Exponential smoothing coefficient of the signal-conditioning stage.
    pub smoothing: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            dac_bits: 8,
            adc_bits: 8,
            memristor_states: 1000,
            snr_md_db: 10.0,
            snr_opamp_db: 30.0,
            snr_interface_db: 25.0,
            prop_loss_db_per_cm: 2.5,
            path_length_cm: 1.0,
            enabled_sites: SiteSet::ALL,
            rng_seed: 0,
            clip: 4.0,
            smoothing: 0.0,
        }
    }
}

impl NoiseModel {
    /// Default parameters with every site disabled.
    pub fn off() -> Self {
        NoiseModel {
            enabled_sites: SiteSet::NONE,
            ..Self::default()
        }
    }

    /// Default parameters with a single site enabled.
    pub fn only(site: Site) -> Self {
        NoiseModel {
            enabled_sites: SiteSet::only(site),
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn enabled(&self, site: Site) -> bool {
        self.enabled_sites.contains(site)
    }

    pub fn is_off(&self) -> bool {
        self.enabled_sites.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dac_bits == 0 || self.adc_bits == 0 || self.dac_bits > 52 || self.adc_bits > 52 {
            return Err(Error::param("bits", "converter resolution must be between 1 and 52 bits"));
        }
        if self.memristor_states < 2 {
            return Err(Error::param("memristor_states", "need at least 2 states"));
        }
        for (name, v) in [
            ("snr_md_db", self.snr_md_db),
            ("snr_opamp_db", self.snr_opamp_db),
            ("snr_interface_db", self.snr_interface_db),
        ] {
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(Error::param(name, "SNR must be a number (use +inf to disable)"));
            }
        }
        if !(self.prop_loss_db_per_cm >= 0.0 && self.prop_loss_db_per_cm.is_finite()) {
            return Err(Error::param("prop_loss_db_per_cm", "must be finite and non-negative"));
        }
        if !(self.path_length_cm >= 0.0 && self.path_length_cm.is_finite()) {
            return Err(Error::param("path_length_cm", "must be finite and non-negative"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::param("clip", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::param("smoothing", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// SNR in dB for an SNR site, `+∞` when the site is disabled.
    pub fn snr_db(&self, site: Site) -> f64 {
        if !self.enabled(site) {
            return f64::INFINITY;
        }
        match site {
            Site::Md => self.snr_md_db,
            Site::Opamp => self.snr_opamp_db,
            Site::Interface => self.snr_interface_db,
            _ => f64::INFINITY,
        }
    }

    /// Amplitude factor of the waveguide path, 1 when propagation is off.
    pub fn path_attenuation(&self) -> f64 {
        if self.enabled(Site::Propagation) {
            attenuation_factor(self.prop_loss_db_per_cm, self.path_length_cm)
        } else {
            1.0
        }
    }

    pub fn describe(&self) -> String {
        let sites: Vec<String> = self.enabled_sites.iter().map(|s| s.name().to_string()).collect();
        alloc::format!(
            "sites=[{}] dac={}b adc={}b states={} md={}dB opamp={}dB interface={}dB loss={}dB/cm x {}cm",
            sites.join(","),
            self.dac_bits,
            self.adc_bits,
            self.memristor_states,
            self.snr_md_db,
            self.snr_opamp_db,
            self.snr_interface_db,
            self.prop_loss_db_per_cm,
            self.path_length_cm
        )
    }
}

/// Level index of `value` on `levels` equally spaced points over `[lo, hi]`.
pub fn quantize_index(value: f64, lo: f64, hi: f64, levels: u64) -> Result<u64> {
    if levels < 2 {
        return Err(Error::param("levels", "quantization needs at least 2 levels"));
    }
    if !(lo < hi) {
        return Err(Error::param("range", alloc::format!("empty quantization range [{lo}, {hi}]")));
    }
    let v = value.clamp(lo, hi);
    let pos = (v - lo) / (hi - lo) * (levels - 1) as f64;
    // Ties (exact .5) round up, toward hi.
    let idx = libm::floor(pos + 0.5) as u64;
    Ok(idx.min(levels - 1))
}

pub fn level_value(index: u64, lo: f64, hi: f64, levels: u64) -> f64 {
    if index + 1 >= levels {
        return hi;
    }
    lo + (hi - lo) * index as f64 / (levels - 1) as f64
}

/// Nearest of `levels` equally spaced points on `[lo, hi]` after clamping.
pub fn quantize_uniform(value: f64, lo: f64, hi: f64, levels: u64) -> Result<f64> {
    let idx = quantize_index(value, lo, hi, levels)?;
    Ok(level_value(idx, lo, hi, levels))
}

/// Standard deviation of noise at `snr_db` below reference power `p_ref`.
pub fn snr_sigma(p_ref: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY || p_ref <= 0.0 {
        return 0.0;
    }
    libm::sqrt(p_ref * libm::pow(10.0, -snr_db / 10.0))
}

/// `signal + n`, `n ~ N(0, p_ref·10^(−snr/10))`.
pub fn apply_snr_noise(signal: f64, snr_db: f64, p_ref: f64, rng: &mut Stream) -> f64 {
    let sigma = snr_sigma(p_ref, snr_db);
    if sigma == 0.0 {
        return signal;
    }
    signal + sigma * gaussian(rng)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `10^(−loss·length/10)`.
pub fn attenuation_factor(loss_db_per_cm: f64, length_cm: f64) -> f64 {
    libm::pow(10.0, -loss_db_per_cm * length_cm / 10.0)
}

pub fn propagation_attenuate(signal: f64, loss_db_per_cm: f64, length_cm: f64) -> f64 {
    signal * attenuation_factor(loss_db_per_cm, length_cm)
}

fn converter_levels(bits: u32) -> Result<u64> {
    if bits == 0 || bits > 52 {
        return Err(Error::param("bits", "converter resolution must be between 1 and 52 bits"));
    }
    Ok(1u64 << bits)
}

pub fn convert_dac(value: f64, bits: u32, lo: f64, hi: f64) -> Result<f64> {
    quantize_uniform(value, lo, hi, converter_levels(bits)?)
}

pub fn convert_adc(value: f64, bits: u32, lo: f64, hi: f64) -> Result<f64> {
    quantize_uniform(value, lo, hi, converter_levels(bits)?)
}

/// Quantizes every value of a slice in place over `[-m, m]`, `m = max|x|`.
/// Returns `m` (zero slices are left untouched).
pub fn quantize_symmetric(values: &mut [f64], levels: u64) -> Result<f64> {
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return Ok(0.0);
    }
    for v in values.iter_mut() {
        *v = quantize_uniform(*v, -m, m, levels)?;
    }
    Ok(m)
}

/// Signal-conditioning stage: clamp to `±limit` then exponential smoothing
/// with coefficient `alpha` (0 leaves the sequence as is). Returns the number
/// of clamped values.
pub fn condition(values: &mut [f64], limit: f64, alpha: f64) -> u64 {
    let mut saturated = 0;
    let mut prev: Option<f64> = None;
    for v in values.iter_mut() {
        if *v > limit {
            *v = limit;
            saturated += 1;
        } else if *v < -limit {
            *v = -limit;
            saturated += 1;
        }
        if alpha > 0.0 {
            if let Some(p) = prev {
                *v = (1.0 - alpha) * *v + alpha * p;
            }
            prev = Some(*v);
        }
    }
    saturated
}

/// Event counters reported alongside results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseCounters {
    pub saturations: u64,
    pub stuck_updates: u64,
}

impl NoiseCounters {
    pub fn merge(&mut self, other: NoiseCounters) {
        self.saturations += other.saturations;
        self.stuck_updates += other.stuck_updates;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_uniform(0.0, 0.0, 1.0, 1000).unwrap(), 0.0);
        assert_eq!(quantize_uniform(1.0, 0.0, 1.0, 1000).unwrap(), 1.0);
        let q = quantize_uniform(0.3, 0.0, 1.0, 1000).unwrap();
        assert!((q - 300.0 / 999.0).abs() < 1e-15);
        assert!(quantize_uniform(0.3, 0.0, 1.0, 1).is_err());
        // exactly halfway between levels 0 and 1 of a 3-level grid
        assert_eq!(quantize_uniform(0.25, 0.0, 1.0, 3).unwrap(), 0.5);
    }

    #[test]
    fn converter_examples() {
        let q = convert_dac(0.5, 8, 0.0, 1.0).unwrap();
        assert!((q - 128.0 / 255.0).abs() < 1e-15);
        assert_eq!(convert_adc(0.4, 1, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn snr_sigma_examples() {
        assert!((snr_sigma(1.0, 10.0) - 0.316_227_766_016_838).abs() < 1e-12);
        assert!((snr_sigma(1.0, 30.0) - 0.031_622_776_601_683_8).abs() < 1e-12);
        let mut r = rng::stream(0, &[]);
        assert_eq!(apply_snr_noise(0.7, f64::INFINITY, 1.0, &mut r), 0.7);
    }

    #[test]
    fn attenuation_examples() {
        assert_eq!(propagation_attenuate(0.8, 2.5, 0.0), 0.8);
        assert!((attenuation_factor(2.5, 1.0) - 0.562_341_325_190_349).abs() < 1e-12);
        assert!((attenuation_factor(10.0, 1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn empirical_noise_power_matches_snr() {
        let mut r = rng::stream(3, &[]);
        let n = 200_000;
        let var: f64 = (0..n).map(|_| apply_snr_noise(0.0, 10.0, 1.0, &mut r).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 0.1).abs() < 0.002, "{var}");
    }

    #[test]
    fn site_set_round_trip() {
        let s: SiteSet = [Site::Md, Site::Opamp].into_iter().collect();
        assert!(s.contains(Site::Md) && !s.contains(Site::Dac));
        assert_eq!(s.iter().collect::<Vec<_>>(), alloc::vec![Site::Md, Site::Opamp]);
        assert_eq!("Interface".parse::<Site>().unwrap(), Site::Interface);
        assert!(NoiseModel::off().is_off());
        assert_eq!(NoiseModel::off().snr_db(Site::Md), f64::INFINITY);
        assert_eq!(NoiseModel::off().path_attenuation(), 1.0);
    }

    #[test]
    fn conditioning_clamps_and_counts() {
        let mut v = [5.0, -0.5, -9.0];
        assert_eq!(condition(&mut v, 4.0, 0.0), 2);
        assert_eq!(v, [4.0, -0.5, -4.0]);
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent(x in -10.0f64..10.0, levels in 2u64..5000) {
            let q = quantize_uniform(x, -3.0, 4.0, levels).unwrap();
            prop_assert_eq!(quantize_uniform(q, -3.0, 4.0, levels).unwrap(), q);
        }

        #[test]
        fn quantize_error_within_half_step(x in 0.0f64..1.0, bits in 1u32..20) {
            let q = convert_dac(x, bits, 0.0, 1.0).unwrap();
            let step = 1.0 / ((1u64 << bits) - 1) as f64;
            prop_assert!((q - x).abs() <= step / 2.0 + 1e-15);
        }

        #[test]
        fn attenuation_composes(l1 in 0.0f64..20.0, l2 in 0.0f64..20.0, x in -5.0f64..5.0) {
            let a = propagation_attenuate(propagation_attenuate(x, l1, 1.0), l2, 1.0);
            let b = propagation_attenuate(x, l1 + l2, 1.0);
            prop_assert!((a - b).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }
}
