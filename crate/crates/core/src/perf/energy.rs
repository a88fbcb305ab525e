//! Device sheet, power aggregation, energy efficiency and published
//! baselines.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// How a component's `power_mw` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PowerMode {
    /// The power of the whole component class.
    #[default]
    Aggregate,
    /// The power of one unit, multiplied by the count.
    PerUnit,
}

impl PowerMode {
    pub fn name(self) -> &'static str {
        match self {
            PowerMode::Aggregate => "aggregate",
            PowerMode::PerUnit => "per_unit",
        }
    }
}

impl fmt::Display for PowerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PowerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "aggregate" => Ok(PowerMode::Aggregate),
            "per_unit" => Ok(PowerMode::PerUnit),
            _ => Err(Error::param("power_mode", alloc::format!("`{s}` is not aggregate or per_unit"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Component {
    pub name: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub detail: String,
    pub count: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub power_mw: f64,
    /// Energy per bit of one unit, converted with the sheet's signal rate.
    #[cfg_attr(feature = "serde", serde(default))]
    pub energy_pj_per_bit: f64,
    pub area_mm2: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub delay_ps: Option<f64>,
}

impl Component {
    fn new(name: &str, detail: &str, count: u64, power_mw: f64, area_mm2: f64, delay_ps: Option<f64>) -> Self {
        Component {
            name: name.to_string(),
            detail: detail.to_string(),
            count,
            power_mw,
            energy_pj_per_bit: 0.0,
            area_mm2,
            delay_ps,
        }
    }

    /// Power of the component class in milliwatts.
    pub fn power(&self, mode: PowerMode, signal_rate_gbps: f64) -> f64 {
        let static_mw = match mode {
            PowerMode::Aggregate => self.power_mw,
            PowerMode::PerUnit => self.power_mw * self.count as f64,
        };
        // pJ/bit × Gbit/s = mW, for every unit
        static_mw + self.energy_pj_per_bit * signal_rate_gbps * self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DeviceSheet {
    /// Bit rate of each per-bit component, one bit per clock slot by default.
    pub signal_rate_gbps: f64,
    pub components: Vec<Component>,
}

impl Default for DeviceSheet {
    fn default() -> Self {
        let tia = Component {
            energy_pj_per_bit: 0.18,
            ..Component::new("tia", "trans-impedance amplifier", 62720, 0.0, 0.28, Some(10.0))
        };
        DeviceSheet {
            signal_rate_gbps: 2.5,
            components: vec![
                Component::new("sram", "2 KB register", 128, 10.0, 0.2, None),
                Component::new("dac", "8-bit, 1.2 Gbps, 64 channels", 208, 4.374, 0.000208, None),
                Component::new("adc", "8-bit, 1.2 Gbps", 245, 490.0, 0.294, None),
                Component::new("memristor", "64 KB crossbar", 1, 30.0, 0.5, None),
                Component::new("microdisk", "", 62720, 1080.8, 39.38, Some(20.0)),
                Component::new("photodiode", "", 62720, 1080.8, 39.38, Some(20.0)),
                tia,
                Component::new("wdm_coupler", "", 16, 0.0, 0.00028, None),
                Component::new("wdm_decoupler", "", 16, 0.0, 0.00028, None),
                Component::new("opamp", "", 980, 0.05, 0.0045, Some(20.0)),
                Component::new("led", "16 wavelengths", 6, 32000.0, 0.384, None),
                Component::new("waveguide", "16-channel DWDM, 450 nm wide", 520, 0.0, 80.0, None),
            ],
        }
    }
}

impl DeviceSheet {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_rate_gbps.is_finite() && self.signal_rate_gbps >= 0.0) {
            return Err(Error::param("signal_rate_gbps", "must be finite and non-negative"));
        }
        for c in &self.components {
            let ok = [c.power_mw, c.energy_pj_per_bit, c.area_mm2, c.delay_ps.unwrap_or(0.0)]
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0);
            if !ok {
                return Err(Error::param(
                    "device sheet",
                    alloc::format!("component `{}` has a negative or non-finite value", c.name),
                ));
            }
        }
        Ok(())
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn total_area_mm2(&self) -> f64 {
        self.components.iter().map(|c| c.area_mm2).sum()
    }

    /// Every power and per-bit energy multiplied by `factor`.
    pub fn scaled_power(&self, factor: f64) -> Self {
        let mut s = self.clone();
        for c in &mut s.components {
            c.power_mw *= factor;
            c.energy_pj_per_bit *= factor;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyReport {
    pub mode: PowerMode,
    /// `(component, milliwatts)` in sheet order.
    pub breakdown: Vec<(String, f64)>,
    pub total_power_mw: f64,
    pub area_mm2: f64,
    pub throughput_gops: f64,
    /// GOPS/s per watt; `None` when the sheet draws no power.
    pub efficiency: Option<f64>,
    /// GOPS/s per watt per mm²; `None` when power or area is zero.
    pub cepw: Option<f64>,
}

pub fn energy_report(sheet: &DeviceSheet, throughput_gops: f64, mode: PowerMode) -> Result<EnergyReport> {
    sheet.validate()?;
    let breakdown: Vec<(String, f64)> = sheet
        .components
        .iter()
        .map(|c| (c.name.clone(), c.power(mode, sheet.signal_rate_gbps)))
        .collect();
    let mut total_power_mw = 0.0;
    for (_, p) in &breakdown {
        total_power_mw += p;
    }
    let area_mm2 = sheet.total_area_mm2();
    let efficiency = (total_power_mw > 0.0).then(|| throughput_gops / (total_power_mw / 1000.0));
    let cepw = efficiency.filter(|_| area_mm2 > 0.0).map(|e| e / area_mm2);
    Ok(EnergyReport {
        mode,
        breakdown,
        total_power_mw,
        area_mm2,
        throughput_gops,
        efficiency,
        cepw,
    })
}

/// Published figures the model is compared against. They are constants and
/// are never recomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub name: &'static str,
    pub value: f64,
    pub unit: &'static str,
    pub source: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConstants {
    pub gpu_train_gops: f64,
    pub gpu_infer_gops: f64,
    pub pipelayer_train_gops: f64,
    pub pipelayer_infer_gops: f64,
    pub reported_train_gops: f64,
    pub reported_infer_gops: f64,
    pub pipelayer_train_efficiency: f64,
    pub pipelayer_infer_efficiency: f64,
    pub reported_train_efficiency: f64,
    pub reported_infer_efficiency: f64,
    pub pipelayer_cepw: f64,
    pub crossbar_cepw: f64,
}

impl Default for BaselineConstants {
    fn default() -> Self {
        BaselineConstants {
            gpu_train_gops: 306.0,
            gpu_infer_gops: 347.0,
            pipelayer_train_gops: 2923.0,
            pipelayer_infer_gops: 3102.0,
            reported_train_gops: 90853.0,
            reported_infer_gops: 98958.0,
            pipelayer_train_efficiency: 31.3,
            pipelayer_infer_efficiency: 33.2,
            reported_train_efficiency: 1027.5,
            reported_infer_efficiency: 1096.5,
            pipelayer_cepw: 106.0,
            crossbar_cepw: 120.0,
        }
    }
}

impl BaselineConstants {
    pub fn rows(&self) -> Vec<Baseline> {
        let b = |name, value, unit, source| Baseline {
            name,
            value,
            unit,
            source,
        };
        vec![
            b("gpu_train_throughput", self.gpu_train_gops, "GOPS/s", "published GPU baseline"),
            b("gpu_infer_throughput", self.gpu_infer_gops, "GOPS/s", "published GPU baseline"),
            b("pipelayer_train_throughput", self.pipelayer_train_gops, "GOPS/s", "published PipeLayer baseline"),
            b("pipelayer_infer_throughput", self.pipelayer_infer_gops, "GOPS/s", "published PipeLayer baseline"),
            b("reported_train_throughput", self.reported_train_gops, "GOPS/s", "published accelerator figure"),
            b("reported_infer_throughput", self.reported_infer_gops, "GOPS/s", "published accelerator figure"),
            b("pipelayer_train_efficiency", self.pipelayer_train_efficiency, "GOPS/s/W", "published PipeLayer baseline"),
            b("pipelayer_infer_efficiency", self.pipelayer_infer_efficiency, "GOPS/s/W", "published PipeLayer baseline"),
            b("reported_train_efficiency", self.reported_train_efficiency, "GOPS/s/W", "published accelerator figure"),
            b("reported_infer_efficiency", self.reported_infer_efficiency, "GOPS/s/W", "published accelerator figure"),
            b("pipelayer_cepw", self.pipelayer_cepw, "GOPS/s/W/mm2", "published PipeLayer baseline"),
            b("crossbar_cepw", self.crossbar_cepw, "GOPS/s/W/mm2", "published crossbar baseline"),
        ]
    }

    /// Speedups of a throughput pair over the GPU and PipeLayer baselines,
    /// as `(name, ratio)`.
    pub fn speedups(&self, train_gops: f64, infer_gops: f64) -> Vec<(&'static str, f64)> {
        vec![
            ("train_vs_gpu", train_gops / self.gpu_train_gops),
            ("infer_vs_gpu", infer_gops / self.gpu_infer_gops),
            ("train_vs_pipelayer", train_gops / self.pipelayer_train_gops),
            ("infer_vs_pipelayer", infer_gops / self.pipelayer_infer_gops),
        ]
    }
}
