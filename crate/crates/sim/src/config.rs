//! Run configuration. Values come from built-in defaults, then an optional
//! TOML file, then command-line flags, each layer overriding the previous.
//!
//! ```toml
//! benchmark = "lenet-a"
//! datapath = "golden"      # or "photonic"
//! seed = 1                 # seeds initialisation, shuffling and noise
//! out = "runs/lenet-a"
//! power_mode = "aggregate" # or "per_unit"
//! device_sheet = "sheet.toml"
//! checkpoint = "runs/lenet-a/checkpoint.bin"
//!
//! [data]
//! train_images = "data/mnist/train-images-idx3-ubyte.gz"
//! train_limit = 10000
//!
//! [train]
//! learning_rate = 0.07
//!
//! [noise]
//! snr_md_db = 10.0
//! enabled_sites = ["md", "opamp"]
//!
//! [timing]
//! t_sm = 400.0
//!
//! [sweep]
//! kind = "loss"
//! values = [0.0, 1.25, 2.5, 5.0]
//! seeds = [1, 2, 3, 4, 5]
//!
//! [perf]
//! image = 224
//! resolutions = [4, 8, 16]
//! ```
//!
//! Unknown keys are rejected. `noise.rng_seed` is always replaced by `seed`.

use std::fs;
use std::path::{Path, PathBuf};

use phocnn_core::cnn::{build_network, build_network_for_input, Benchmark, NetworkConfig, TrainParams};
use phocnn_core::noise::{NoiseModel, Site, SiteSet};
use phocnn_core::perf::{DeviceSheet, PowerMode, TimingParams};
use phocnn_core::training::Datapath;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: String,
    pub datapath: Datapath,
    pub seed: u64,
    pub out: PathBuf,
    pub power_mode: PowerMode,
    /// TOML device sheet replacing the built-in component table.
    pub device_sheet: Option<PathBuf>,
    /// Checkpoint read by `infer` and `report`.
    pub checkpoint: Option<PathBuf>,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub noise: NoiseModel,
    pub timing: TimingParams,
    pub sweep: SweepConfig,
    pub perf: PerfConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmark: "lenet-a".into(),
            datapath: Datapath::Golden,
            seed: 1,
            out: PathBuf::from("runs/default"),
            power_mode: PowerMode::Aggregate,
            device_sheet: None,
            checkpoint: None,
            data: DataConfig::default(),
            train: TrainConfig::default(),
            noise: NoiseModel::default(),
            timing: TimingParams::default(),
            sweep: SweepConfig::default(),
            perf: PerfConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        let d = Path::new("data/mnist");
        DataConfig {
            train_images: d.join("train-images-idx3-ubyte.gz"),
            train_labels: d.join("train-labels-idx1-ubyte.gz"),
            test_images: d.join("t10k-images-idx3-ubyte.gz"),
            test_labels: d.join("t10k-labels-idx1-ubyte.gz"),
            train_limit: Some(10_000),
            test_limit: Some(2_000),
        }
    }
}

/// Training hyperparameters; the seed lives at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub target_low: f64,
    pub bias_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let p = TrainParams::default();
        TrainConfig {
            learning_rate: p.learning_rate,
            batch_size: p.batch_size,
            epochs: p.epochs,
            target_low: p.target_low,
            bias_init: p.bias_init,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// One row per noise site enabled alone; `values` is unused.
    Site,
    /// Microdisk SNR in dB.
    SnrMd,
    /// DAC and ADC resolution in bits.
    Resolution,
    /// Propagation loss in dB/cm.
    Loss,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Site => "site",
            SweepKind::SnrMd => "snr_md",
            SweepKind::Resolution => "resolution",
            SweepKind::Loss => "loss",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub sites: Vec<Site>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kind: SweepKind::Loss,
            values: vec![0.0, 1.25, 2.5, 5.0],
            sites: vec![Site::Md, Site::Interface, Site::Memristor, Site::Opamp],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerfConfig {
    /// Square input side; the benchmark's native size when absent.
    pub image: Option<usize>,
    /// Converter resolutions for the resolution-invariance table.
    pub resolutions: Vec<u32>,
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub benchmark: Option<String>,
    pub datapath: Option<Datapath>,
    pub power_mode: Option<PowerMode>,
    pub noise: Option<String>,
    pub epochs: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub image: Option<usize>,
    pub resolutions: Option<Vec<u32>>,
}

/// Parses `off`, `default`/`all`, or a comma-separated list of site names.
pub fn parse_sites(s: &str) -> Result<SiteSet> {
    match s.trim() {
        "off" | "none" => Ok(SiteSet::NONE),
        "default" | "all" => Ok(SiteSet::ALL),
        list => list
            .split(',')
            .map(|t| t.trim().parse::<Site>().map_err(|e| CliError::Config(e.to_string())))
            .collect(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_toml(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
            None => RunConfig::default(),
        };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(b) = &o.benchmark {
            self.benchmark = b.clone();
        }
        if let Some(d) = o.datapath {
            self.datapath = d;
        }
        if let Some(m) = o.power_mode {
            self.power_mode = m;
        }
        if let Some(n) = &o.noise {
            self.noise.enabled_sites = parse_sites(n)?;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(c) = &o.checkpoint {
            self.checkpoint = Some(c.clone());
        }
        if let Some(i) = o.image {
            self.perf.image = Some(i);
        }
        if let Some(r) = &o.resolutions {
            self.perf.resolutions = r.clone();
        }
        self.noise.rng_seed = self.seed;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.benchmark()?;
        self.train_params().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.timing.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.perf.image == Some(0) {
            return Err(CliError::Config("perf.image must be positive".into()));
        }
        Ok(())
    }

    pub fn benchmark(&self) -> Result<Benchmark> {
        self.benchmark.parse().map_err(|e: phocnn_core::Error| CliError::Config(e.to_string()))
    }

    /// The network at the configured input size.
    pub fn network(&self) -> Result<NetworkConfig> {
        let b = self.benchmark()?;
        match self.perf.image {
            None => Ok(build_network(b)),
            Some(side) => {
                let (_, channels, classes) = b.default_input();
                build_network_for_input(b, (side, side), channels, classes).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            rng_seed: self.seed,
            target_low: self.train.target_low,
            bias_init: self.train.bias_init,
        }
    }

    pub fn device_sheet(&self) -> Result<DeviceSheet> {
        let sheet = match &self.device_sheet {
            None => DeviceSheet::default(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str(&text).map_err(|e| CliError::InvalidSheet(e.to_string()))?
            }
        };
        sheet.validate().map_err(|e| CliError::InvalidSheet(e.to_string()))?;
        Ok(sheet)
    }

    /// Canonical serialisation, used for hashing and the manifest.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(RunConfig::from_toml("benchmrk = \"vgg-a\""), Err(CliError::Config(_))));
        assert!(RunConfig::from_toml("[noise]\nsnr_md = 3.0").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut c = RunConfig::from_toml("seed = 3\nbenchmark = \"vgg-a\"\n[train]\nepochs = 7").unwrap();
        assert_eq!(c.train.epochs, 7);
        c.apply(&Overrides {
            seed: Some(9),
            epochs: Some(0),
            noise: Some("md,opamp".into()),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!((c.seed, c.noise.rng_seed, c.train.epochs), (9, 9, 0));
        assert_eq!(c.benchmark().unwrap(), Benchmark::VggA);
        assert!(c.noise.enabled(Site::Md) && !c.noise.enabled(Site::Dac));
    }

    #[test]
    fn bad_benchmark_is_a_config_error() {
        let c = RunConfig {
            benchmark: "alexnet".into(),
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }
}
