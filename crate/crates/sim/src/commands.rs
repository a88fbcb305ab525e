//! The five commands. Each writes its outputs and a manifest into the run
//! directory and returns a short human-readable summary.

use std::fs;
use std::path::{Path, PathBuf};

use phocnn_core::experiments::{accuracy_under, SeededModel, Summary};
use phocnn_core::noise::{NoiseModel, SiteSet};
use phocnn_core::training::{evaluate, train_with, Datapath, Dataset, Evaluation};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, SweepKind};
use crate::error::{CliError, Result};
use crate::idx::load_dataset;
use crate::manifest::{sha256_hex, Manifest};
use crate::report::{perf_report, write_csv, write_json, Metric};

pub fn load_train(cfg: &RunConfig) -> Result<Dataset> {
    load_dataset(&cfg.data.train_images, &cfg.data.train_labels, cfg.data.train_limit)
}

pub fn load_test(cfg: &RunConfig) -> Result<Dataset> {
    load_dataset(&cfg.data.test_images, &cfg.data.test_labels, cfg.data.test_limit)
}

fn create_out(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn finish(mut manifest: Manifest, dir: &Path, outputs: &[&str]) -> Result<()> {
    for name in outputs {
        manifest.add_output(dir, name)?;
    }
    manifest.write(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub saturations: u64,
    pub stuck_updates: u64,
}

/// Trains the configured network. Writes `accuracy.csv` (one row per
/// epoch), `checkpoint.bin` and `manifest.json`.
pub fn train(cfg: &RunConfig) -> Result<Vec<AccuracyRow>> {
    let net = cfg.network()?;
    let train_set = load_train(cfg)?;
    let test_set = load_test(cfg)?;
    let outcome = train_with(
        &net,
        &train_set,
        Some(&test_set),
        &cfg.train_params(),
        cfg.datapath,
        &cfg.noise,
        |e| {
            eprintln!(
                "epoch {}: loss {:.4}, train {:.4}, test {:.4}",
                e.epoch,
                e.loss,
                e.train_accuracy,
                e.test_accuracy.unwrap_or(f64::NAN)
            )
        },
    )?;
    let rows: Vec<AccuracyRow> = outcome
        .history
        .iter()
        .map(|e| AccuracyRow {
            epoch: e.epoch,
            loss: e.loss,
            train_accuracy: e.train_accuracy,
            test_accuracy: e.test_accuracy.unwrap_or(f64::NAN),
            saturations: e.counters.saturations,
            stuck_updates: e.counters.stuck_updates,
        })
        .collect();
    let dir = create_out(cfg)?;
    write_csv(&dir.join("accuracy.csv"), &rows)?;
    let ckpt = match outcome.conductances {
        Some(state) => Checkpoint {
            network: net.name.clone(),
            state,
        },
        None => Checkpoint::from_model(&outcome.model)?,
    };
    ckpt.write(&dir.join("checkpoint.bin"))?;
    finish(Manifest::new("train", cfg), dir, &["accuracy.csv", "checkpoint.bin"])?;
    Ok(rows)
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint.clone().unwrap_or_else(|| cfg.out.join("checkpoint.bin"))
}

/// Evaluates a checkpoint on the test set. Writes `infer.csv`.
pub fn infer(cfg: &RunConfig) -> Result<Evaluation> {
    let net = cfg.network()?;
    let model = Checkpoint::read(&checkpoint_path(cfg))?.to_model(&net)?;
    let test_set = load_test(cfg)?;
    let eval = evaluate(&model, &test_set, cfg.datapath, &cfg.noise)?;
    let mode = cfg.datapath.name();
    let rows = vec![
        Metric::new("samples", eval.total as f64, "images", mode, "test set"),
        Metric::new("accuracy", eval.accuracy(), "fraction", mode, "correct / samples"),
        Metric::new("per", eval.per(), "%", mode, "prediction error rate"),
        Metric::new("saturations", eval.counters.saturations as f64, "events", mode, "converter and modulator clipping"),
        Metric::new("stuck_updates", eval.counters.stuck_updates as f64, "events", mode, "conductance updates below one state"),
    ];
    let dir = create_out(cfg)?;
    write_csv(&dir.join("infer.csv"), &rows)?;
    finish(Manifest::new("infer", cfg), dir, &["infer.csv"])?;
    Ok(eval)
}

/// Latency, throughput, energy and timeline report. Writes `perf.csv`,
/// `perf.json`, `timeline.csv` and, with resolutions, `resolution.csv`.
pub fn perf(cfg: &RunConfig) -> Result<Vec<Metric>> {
    let net = cfg.network()?;
    let sheet = cfg.device_sheet()?;
    let report = perf_report(&net, &cfg.timing, &sheet, cfg.power_mode, &cfg.perf.resolutions)?;
    let dir = create_out(cfg)?;
    write_csv(&dir.join("perf.csv"), &report.metrics)?;
    write_json(&dir.join("perf.json"), &report)?;
    write_csv(&dir.join("timeline.csv"), &report.timeline)?;
    let mut outputs = vec!["perf.csv", "perf.json", "timeline.csv"];
    if !report.resolutions.is_empty() {
        write_csv(&dir.join("resolution.csv"), &report.resolutions)?;
        outputs.push("resolution.csv");
    }
    finish(Manifest::new("perf", cfg), dir, &outputs)?;
    Ok(report.metrics)
}

/// Golden model for one seed, trained once and cached under the run
/// directory.
fn seeded_model(cfg: &RunConfig, seed: u64, train_set: &Dataset) -> Result<SeededModel> {
    let net = cfg.network()?;
    let path = cfg.out.join("models").join(format!("seed-{seed}.bin"));
    if path.exists() {
        return Ok(SeededModel {
            seed,
            model: Checkpoint::read(&path)?.to_model(&net)?,
        });
    }
    let params = phocnn_core::cnn::TrainParams {
        rng_seed: seed,
        ..cfg.train_params()
    };
    let out = train_with(&net, train_set, None, &params, Datapath::Golden, &NoiseModel::off(), |_| {})?;
    Checkpoint::from_model(&out.model)?.write(&path)?;
    Ok(SeededModel { seed, model: out.model })
}

/// A completed grid point, stored as its own file until the merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub label: String,
    pub key: String,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: String,
    pub point: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub per_mean: f64,
    pub per_delta_mean: f64,
    pub per_delta_std: f64,
    pub seeds: usize,
}

/// The noise model at each grid point, labelled. The first point is the
/// noise-free reference.
pub fn grid(cfg: &RunConfig) -> Result<Vec<(String, NoiseModel)>> {
    let s = &cfg.sweep;
    let base = cfg.noise.clone();
    let mut pts = vec![("clean".to_string(), NoiseModel::off().with_seed(cfg.seed))];
    match s.kind {
        SweepKind::Site => {
            for &site in &s.sites {
                let mut n = base.clone();
                n.enabled_sites = SiteSet::only(site);
                pts.push((site.name().to_string(), n));
            }
        }
        kind => {
            for &v in &s.values {
                let mut n = base.clone();
                match kind {
                    SweepKind::SnrMd => n.snr_md_db = v,
                    SweepKind::Resolution => {
                        if v.fract() != 0.0 || v < 1.0 {
                            return Err(CliError::Config(format!("resolution {v} is not a whole number of bits")));
                        }
                        n.dac_bits = v as u32;
                        n.adc_bits = v as u32;
                    }
                    SweepKind::Loss => n.prop_loss_db_per_cm = v,
                    SweepKind::Site => unreachable!(),
                }
                n.validate().map_err(|e| CliError::Config(e.to_string()))?;
                pts.push((v.to_string(), n));
            }
        }
    }
    if pts.len() == 1 {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    if s.seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one seed".into()));
    }
    Ok(pts)
}

/// Evaluates every grid point over golden models trained with each sweep
/// seed. Points already on disk with the same key are skipped, so an
/// interrupted sweep resumes where it stopped. Writes `sweep.csv`.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let points = grid(cfg)?;
    let dir = create_out(cfg)?;
    let train_set = load_train(cfg)?;
    let test_set = load_test(cfg)?;
    let models = cfg
        .sweep
        .seeds
        .iter()
        .map(|&s| seeded_model(cfg, s, &train_set))
        .collect::<Result<Vec<_>>>()?;
    let model_hash = sha256_hex(
        &models
            .iter()
            .flat_map(|m| Checkpoint::from_model(&m.model).map(|c| c.to_bytes()).unwrap_or_default())
            .collect::<Vec<u8>>(),
    );
    let mut results = Vec::with_capacity(points.len());
    for (i, (label, noise)) in points.iter().enumerate() {
        let key = sha256_hex(
            format!("{model_hash}|{}|{}", toml::to_string(noise).expect("noise serialises"), test_set.len()).as_bytes(),
        );
        let path = dir.join("points").join(format!("point-{i:03}.json"));
        if let Some(done) = fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str::<PointResult>(&t).ok())
            .filter(|p| p.key == key)
        {
            results.push(done);
            continue;
        }
        let acc = accuracy_under(&models, &test_set, noise)?;
        let r = PointResult {
            label: label.clone(),
            key,
            accuracies: acc.values,
        };
        write_json(&path, &r)?;
        eprintln!("point {label}: accuracy {:.4}", Summary::of(r.accuracies.clone()).mean);
        results.push(r);
    }
    let clean = &results[0].accuracies;
    let rows: Vec<SweepRow> = results
        .iter()
        .map(|r| {
            let acc = Summary::of(r.accuracies.clone());
            let delta = Summary::of(clean.iter().zip(&r.accuracies).map(|(c, a)| 100.0 * (c - a)).collect());
            SweepRow {
                kind: cfg.sweep.kind.name().into(),
                point: r.label.clone(),
                accuracy_mean: acc.mean,
                accuracy_std: acc.std,
                per_mean: 100.0 * (1.0 - acc.mean),
                per_delta_mean: delta.mean,
                per_delta_std: delta.std,
                seeds: r.accuracies.len(),
            }
        })
        .collect();
    write_csv(&dir.join("sweep.csv"), &rows)?;
    finish(Manifest::new("sweep", cfg), dir, &["sweep.csv"])?;
    Ok(rows)
}

/// Status of one recorded output of a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputStatus {
    Ok,
    Modified,
    Missing,
}

/// Checks a run directory against its manifest.
pub fn report(dir: &Path) -> Result<(Manifest, Vec<(String, OutputStatus)>)> {
    let manifest = Manifest::read(&dir.join("manifest.json"))?;
    let status = manifest
        .outputs
        .iter()
        .map(|(name, hash)| {
            let s = match fs::read(dir.join(name)) {
                Ok(b) if &sha256_hex(&b) == hash => OutputStatus::Ok,
                Ok(_) => OutputStatus::Modified,
                Err(_) => OutputStatus::Missing,
            };
            (name.clone(), s)
        })
        .collect();
    Ok((manifest, status))
}
