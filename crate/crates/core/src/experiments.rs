//! Seeded evaluation grids: noise ablation, resolution and loss sweeps.
//!
//! Every grid point is evaluated against the same trained models, and each
//! model's noise streams are seeded from the model's own seed, so the
//! points of a grid share their random draws (common random numbers).

use alloc::string::String;
use alloc::vec::Vec;

use crate::cnn::Model;
use crate::error::{Error, Result};
use crate::noise::{NoiseModel, Site, SiteSet};
use crate::training::{evaluate, Dataset, Datapath};

/// Mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
        } else {
            0.0
        };
        Summary { mean, std, values }
    }
}

/// A trained model together with the seed that produced it.
#[derive(Debug, Clone)]
pub struct SeededModel {
    pub seed: u64,
    pub model: Model,
}

/// Accuracy of every model under one noise configuration. The noise seed
/// is replaced by each model's seed. An all-off model uses the golden
/// datapath, which it equals.
pub fn accuracy_under(models: &[SeededModel], data: &Dataset, noise: &NoiseModel) -> Result<Summary> {
    if models.is_empty() {
        return Err(Error::param("models", "need at least one seeded model"));
    }
    let mut acc = Vec::with_capacity(models.len());
    for m in models {
        let e = if noise.is_off() {
            evaluate(&m.model, data, Datapath::Golden, noise)?
        } else {
            evaluate(&m.model, data, Datapath::Photonic, &noise.clone().with_seed(m.seed))?
        };
        acc.push(e.accuracy());
    }
    Ok(Summary::of(acc))
}

/// Mean accuracy at each point of a grid.
pub fn accuracy_grid(models: &[SeededModel], data: &Dataset, points: &[NoiseModel]) -> Result<Vec<Summary>> {
    if points.is_empty() {
        return Err(Error::param("grid", "grid is empty"));
    }
    points.iter().map(|p| accuracy_under(models, data, p)).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AblationRow {
    pub site: String,
    /// PER with the site enabled minus noise-free PER, in percentage points.
    pub per_delta: Summary,
}

/// Enables each site of `sites` alone on top of `base` (whose SNRs and
/// resolutions are used) and reports the PER change against noise-free
/// inference.
pub fn noise_ablation(models: &[SeededModel], data: &Dataset, base: &NoiseModel, sites: &[Site]) -> Result<Vec<AblationRow>> {
    let clean = accuracy_under(models, data, &NoiseModel::off())?;
    let mut rows = Vec::with_capacity(sites.len());
    for &site in sites {
        let mut noise = base.clone();
        noise.enabled_sites = if base.enabled_sites.contains(site) {
            SiteSet::only(site)
        } else {
            SiteSet::NONE
        };
        let noisy = accuracy_under(models, data, &noise)?;
        let deltas = clean
            .values
            .iter()
            .zip(&noisy.values)
            .map(|(c, n)| 100.0 * (c - n))
            .collect();
        rows.push(AblationRow {
            site: String::from(site.name()),
            per_delta: Summary::of(deltas),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{NetworkConfig, Stage};
    use crate::rng;
    use crate::tensor::Tensor;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::Rng;

    fn setup() -> (Vec<SeededModel>, Dataset) {
        let net = NetworkConfig {
            name: "t".to_string(),
            stages: vec![Stage::conv(3, 2, 1), Stage::relu(), Stage::pool(2), Stage::fc(3, 1), Stage::relu()],
            input_size: (4, 4),
            input_channels: 1,
            num_classes: 3,
        };
        let models = (0..3)
            .map(|seed| SeededModel {
                seed,
                model: Model::init(&net, seed, 0.1).unwrap(),
            })
            .collect();
        let mut r = rng::stream(4, &[]);
        let images = (0..20).map(|_| Tensor::from_fn([1, 4, 4], |_| r.random_range(0.0..1.0))).collect();
        let labels = (0..20).map(|i| i % 3).collect();
        (models, Dataset::new(images, labels).unwrap())
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Summary::of(vec![]).mean, 0.0);
    }

    #[test]
    fn all_sites_off_gives_zero_deltas() {
        let (models, data) = setup();
        let rows = noise_ablation(&models, &data, &NoiseModel::off(), &Site::ALL).unwrap();
        assert_eq!(rows.len(), Site::ALL.len());
        assert!(rows.iter().all(|r| r.per_delta.mean == 0.0 && r.per_delta.values.len() == 3));
    }

    #[test]
    fn grid_is_deterministic() {
        let (models, data) = setup();
        let pts = [NoiseModel::default(), NoiseModel::only(Site::Md)];
        assert_eq!(
            accuracy_grid(&models, &data, &pts).unwrap(),
            accuracy_grid(&models, &data, &pts).unwrap()
        );
        assert!(accuracy_grid(&models, &data, &[]).is_err());
    }
}
