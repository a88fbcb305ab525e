//! CSV and JSON emission. Every CSV has a header row, comma separators,
//! dot decimals and LF line endings; floats use the shortest representation
//! that round-trips, so identical runs give byte-identical files.

use std::fs;
use std::path::Path;

use phocnn_core::cnn::NetworkConfig;
use phocnn_core::perf::{
    backward_latency, closed_form_fe_latency, energy_report, forward_latency, pipeline_schedule, throughput,
    BaselineConstants, DeviceSheet, EnergyReport, Event, PowerMode, Throughput, TimingParams,
};
use serde::Serialize;

use crate::error::{CliError, Result};

/// One row of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub metric: String,
    pub value: String,
    pub unit: String,
    /// `model` for values this tool derives, `reported` for published
    /// constants, or the power mode for energy rows.
    pub mode: String,
    pub citation: String,
}

impl Metric {
    pub fn new(metric: impl Into<String>, value: f64, unit: &str, mode: &str, citation: &str) -> Self {
        Metric {
            metric: metric.into(),
            value: value.to_string(),
            unit: unit.into(),
            mode: mode.into(),
            citation: citation.into(),
        }
    }

    pub fn text(metric: impl Into<String>, value: &str, unit: &str, mode: &str, citation: &str) -> Self {
        Metric {
            metric: metric.into(),
            value: value.into(),
            unit: unit.into(),
            mode: mode.into(),
            citation: citation.into(),
        }
    }

    pub fn value_f64(&self) -> Option<f64> {
        self.value.parse().ok()
    }
}

pub fn find<'a>(rows: &'a [Metric], name: &str) -> Option<&'a Metric> {
    rows.iter().find(|m| m.metric == name)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

/// Writes through a temporary file so a reader never sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialise to CSV");
    }
    w.into_inner().expect("in-memory writer")
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("value serialises to JSON");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineRow {
    pub time_ps: f64,
    pub slots: f64,
    pub kind: String,
    pub stage: usize,
    pub block: usize,
    pub tile: String,
    pub features: usize,
}

impl TimelineRow {
    fn from_event(e: &Event, t_sm: f64) -> Self {
        TimelineRow {
            time_ps: e.time_ps,
            slots: e.time_ps / t_sm,
            kind: format!("{:?}", e.kind).to_lowercase(),
            stage: e.stage,
            block: e.block,
            tile: e.tile.map_or_else(String::new, |t| t.to_string()),
            features: e.features,
        }
    }
}

/// Latency and throughput at one converter resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionRow {
    pub resolution_bits: u32,
    pub forward_latency_ps: f64,
    pub backward_latency_ps: f64,
    pub inference_gops: f64,
    pub training_gops: f64,
}

/// Everything `perf` derives for one network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfReport {
    pub network: String,
    pub input: (usize, usize),
    pub mode: PowerMode,
    pub fe_latency_ps: f64,
    pub forward_latency_ps: f64,
    pub backward_latency_ps: f64,
    pub throughput: Throughput,
    pub inference_energy: EnergyReport,
    pub training_energy: EnergyReport,
    pub metrics: Vec<Metric>,
    pub timeline: Vec<TimelineRow>,
    pub resolutions: Vec<ResolutionRow>,
}

const SCHEDULE: &str = "pipeline schedule model";
const SHEET: &str = "device sheet";
const NOT_DERIVABLE: &str = "the published throughput and efficiency cannot be derived from the published latencies and operation counts; model values are reported beside them, never in their place";

fn energy_rows(rows: &mut Vec<Metric>, label: &str, r: &EnergyReport) {
    let mode = r.mode.name();
    match r.efficiency {
        Some(e) => rows.push(Metric::new(format!("{label}_efficiency"), e, "GOPS/s/W", mode, "model throughput / total power")),
        None => rows.push(Metric::text(format!("{label}_efficiency"), "undefined", "GOPS/s/W", mode, "error: total power is zero")),
    }
    match r.cepw {
        Some(c) => rows.push(Metric::new(format!("{label}_cepw"), c, "GOPS/s/W/mm2", mode, "efficiency / total area")),
        None => rows.push(Metric::text(format!("{label}_cepw"), "undefined", "GOPS/s/W/mm2", mode, "error: total power or area is zero")),
    }
}

pub fn perf_report(
    network: &NetworkConfig,
    timing: &TimingParams,
    sheet: &DeviceSheet,
    mode: PowerMode,
    resolutions: &[u32],
) -> Result<PerfReport> {
    let fe = closed_form_fe_latency(network, timing)?;
    let fwd = forward_latency(network, timing)?;
    let bwd = backward_latency(network, timing)?;
    let tp = throughput(network, timing)?;
    let inference_energy = energy_report(sheet, tp.inference_gops, mode).map_err(|e| CliError::InvalidSheet(e.to_string()))?;
    let training_energy = energy_report(sheet, tp.training_gops, mode).map_err(|e| CliError::InvalidSheet(e.to_string()))?;
    let timeline = pipeline_schedule(network, timing)?;

    let mut m = vec![
        Metric::new("fe_latency", fe / 1000.0, "ns", "model", SCHEDULE),
        Metric::new("forward_latency", fwd / 1000.0, "ns", "model", SCHEDULE),
        Metric::new("backward_latency", bwd, "ps", "model", "backprop stages x T_b"),
        Metric::new("t_sm", timing.t_sm, "ps", "model", "timing parameters"),
        Metric::new("t_fe", timing.t_fe(), "ps", "model", "photodiode + relu + pool + interface"),
        Metric::new("t_b", timing.t_b(), "ps", "model", "sum of backprop component delays"),
        Metric::new("moves_per_slot", timing.moves_per_slot() as f64, "moves", "model", "floor(T_sm / T_FE)"),
        Metric::new("operations", tp.operations as f64, "ops", "model", "2 ops per MAC, forward pass"),
        Metric::new("inference_interval", tp.inference_interval_ps, "ps", "model", "FE latency"),
        Metric::new("training_interval", tp.training_interval_ps, "ps", "model", "forward + backward latency"),
        Metric::new("inference_throughput", tp.inference_gops, "GOPS/s", "model", "operations / inference interval"),
        Metric::new("training_throughput", tp.training_gops, "GOPS/s", "model", "operations / training interval"),
    ];
    for (name, p) in &inference_energy.breakdown {
        m.push(Metric::new(format!("power.{name}"), *p, "mW", mode.name(), SHEET));
    }
    m.push(Metric::new("total_power", inference_energy.total_power_mw, "mW", mode.name(), "sum of component powers"));
    m.push(Metric::new("area", inference_energy.area_mm2, "mm2", mode.name(), "sum of component areas"));
    energy_rows(&mut m, "inference", &inference_energy);
    energy_rows(&mut m, "training", &training_energy);

    let base = BaselineConstants::default();
    for b in base.rows() {
        m.push(Metric::new(format!("baseline.{}", b.name), b.value, b.unit, "reported", b.source));
    }
    for (name, r) in base.speedups(tp.training_gops, tp.inference_gops) {
        m.push(Metric::new(format!("speedup.model.{name}"), r, "x", "model", "model throughput / published baseline"));
    }
    for (name, r) in base.speedups(base.reported_train_gops, base.reported_infer_gops) {
        m.push(Metric::new(format!("speedup.reported.{name}"), r, "x", "reported", "published throughput / published baseline"));
    }
    m.push(Metric::new("note.ops_per_mac", 2.0, "ops", "model", "operation counting convention"));
    m.push(Metric::new("note.tia_signal_rate", sheet.signal_rate_gbps, "Gbit/s", mode.name(), "converts TIA energy per bit into power"));
    m.push(Metric::text("note.power_mode", mode.name(), "", mode.name(), "aggregate reads each power as the whole component class"));
    m.push(Metric::text("note.reported_throughput_derivable", "false", "", "reported", NOT_DERIVABLE));
    if let (Some(md), Some(pd)) = (sheet.component("microdisk"), sheet.component("photodiode")) {
        if md.power_mw == pd.power_mw && md.area_mm2 == pd.area_mm2 {
            m.push(Metric::text("note.microdisk_photodiode_identical", "true", "", mode.name(), "identical sheet rows, read literally"));
        }
    }

    // Converters sit only at pass boundaries, so resolution never enters the
    // schedule; each row is still computed independently.
    let resolutions = resolutions
        .iter()
        .map(|&bits| {
            let tp = throughput(network, timing)?;
            Ok(ResolutionRow {
                resolution_bits: bits,
                forward_latency_ps: forward_latency(network, timing)?,
                backward_latency_ps: backward_latency(network, timing)?,
                inference_gops: tp.inference_gops,
                training_gops: tp.training_gops,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PerfReport {
        network: network.name.clone(),
        input: network.input_size,
        mode,
        fe_latency_ps: fe,
        forward_latency_ps: fwd,
        backward_latency_ps: bwd,
        throughput: tp,
        inference_energy,
        training_energy,
        metrics: m,
        timeline: timeline.events.iter().map(|e| TimelineRow::from_event(e, timeline.t_sm)).collect(),
        resolutions,
    })
}
