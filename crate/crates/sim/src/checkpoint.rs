//! Binary conductance snapshots.
//!
//! Little-endian layout:
//!
//! ```text
//! "PHCK" u32:version u32:name_len name
//! u32:n_layers { u32:layer u32:rows u32:cols u32:states f64:range u32:rank u32:dims[rank] }
//! u64:n_entries { u32:layer u32:row u32:col u32:level f64:value }
//! ```
//!
//! `states = 0` marks a layer stored at full precision; its entries carry
//! level 0. Entries are written layer by layer in row-major order.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use phocnn_core::cnn::{Model, NetworkConfig};
use phocnn_core::noise::NoiseModel;
use phocnn_core::photonic::{ConductanceState, LayerConductance};

use crate::error::{CliError, Result};
use crate::report::write_atomic;

pub const MAGIC: &[u8; 4] = b"PHCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: String,
    pub state: ConductanceState,
}

impl Checkpoint {
    /// Snapshot of a floating-point model at full precision.
    pub fn from_model(model: &Model) -> Result<Self> {
        Ok(Checkpoint {
            network: model.config.name.clone(),
            state: ConductanceState::program(model, &NoiseModel::off())?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        // Writes into a Vec cannot fail.
        let w = &mut b;
        w.write_u32::<LE>(VERSION).unwrap();
        w.write_u32::<LE>(self.network.len() as u32).unwrap();
        w.extend_from_slice(self.network.as_bytes());
        w.write_u32::<LE>(self.state.layers.len() as u32).unwrap();
        for l in &self.state.layers {
            w.write_u32::<LE>(l.layer as u32).unwrap();
            w.write_u32::<LE>(l.rows as u32).unwrap();
            w.write_u32::<LE>(l.cols as u32).unwrap();
            w.write_u32::<LE>(l.states.unwrap_or(0)).unwrap();
            w.write_f64::<LE>(l.range).unwrap();
            w.write_u32::<LE>(l.weight_shape.len() as u32).unwrap();
            for &d in &l.weight_shape {
                w.write_u32::<LE>(d as u32).unwrap();
            }
        }
        let n: usize = self.state.layers.iter().map(|l| l.values.len()).sum();
        w.write_u64::<LE>(n as u64).unwrap();
        for l in &self.state.layers {
            for (i, &v) in l.values.iter().enumerate() {
                w.write_u32::<LE>(l.layer as u32).unwrap();
                w.write_u32::<LE>((i / l.cols) as u32).unwrap();
                w.write_u32::<LE>((i % l.cols) as u32).unwrap();
                w.write_u32::<LE>(l.level_index(v).unwrap_or(0) as u32).unwrap();
                w.write_f64::<LE>(v).unwrap();
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| CliError::MalformedCheckpoint {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let trunc = |_| bad("truncated");
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(trunc)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint"));
        }
        let version = r.read_u32::<LE>().map_err(trunc)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let len = r.read_u32::<LE>().map_err(trunc)? as usize;
        let mut name = vec![0u8; len.min(bytes.len())];
        r.read_exact(&mut name).map_err(trunc)?;
        let network = String::from_utf8(name).map_err(|_| bad("network name is not UTF-8"))?;
        let n_layers = r.read_u32::<LE>().map_err(trunc)? as usize;
        let mut layers = Vec::new();
        for _ in 0..n_layers {
            let layer = r.read_u32::<LE>().map_err(trunc)? as usize;
            let rows = r.read_u32::<LE>().map_err(trunc)? as usize;
            let cols = r.read_u32::<LE>().map_err(trunc)? as usize;
            let states = r.read_u32::<LE>().map_err(trunc)?;
            let range = r.read_f64::<LE>().map_err(trunc)?;
            let rank = r.read_u32::<LE>().map_err(trunc)? as usize;
            let weight_shape = (0..rank.min(8))
                .map(|_| r.read_u32::<LE>().map(|d| d as usize))
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(trunc)?;
            if rank > 8 || cols == 0 || weight_shape.iter().product::<usize>() != rows * (cols - 1) {
                return Err(bad(&format!("inconsistent shape for layer {layer}")));
            }
            if !(range.is_finite() && range > 0.0) {
                return Err(bad(&format!("invalid range for layer {layer}")));
            }
            layers.push(LayerConductance {
                layer,
                rows,
                cols,
                weight_shape,
                values: Vec::with_capacity(rows * cols),
                range,
                states: (states > 0).then_some(states),
            });
        }
        let n = r.read_u64::<LE>().map_err(trunc)?;
        if n != layers.iter().map(|l| (l.rows * l.cols) as u64).sum::<u64>() {
            return Err(bad("entry count does not match the layer table"));
        }
        for l in &mut layers {
            for i in 0..l.rows * l.cols {
                let layer = r.read_u32::<LE>().map_err(trunc)? as usize;
                let row = r.read_u32::<LE>().map_err(trunc)? as usize;
                let col = r.read_u32::<LE>().map_err(trunc)? as usize;
                let _level = r.read_u32::<LE>().map_err(trunc)?;
                let value = r.read_f64::<LE>().map_err(trunc)?;
                if (layer, row, col) != (l.layer, i / l.cols, i % l.cols) {
                    return Err(bad("entries out of order"));
                }
                l.values.push(value);
            }
        }
        if (r.position() as usize) != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint {
            network,
            state: ConductanceState { layers },
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Loads the stored weights into a freshly built `network`.
    pub fn to_model(&self, network: &NetworkConfig) -> Result<Model> {
        if self.network != network.name {
            return Err(CliError::ShapeMismatch(format!(
                "checkpoint holds `{}`, benchmark is `{}`",
                self.network, network.name
            )));
        }
        let mut model = Model::init(network, 0, 0.0)?;
        let trainable = model.layers.iter().filter(|l| l.is_trainable()).count();
        if trainable != self.state.layers.len() {
            return Err(CliError::ShapeMismatch(format!(
                "{} stored layers, network has {trainable}",
                self.state.layers.len()
            )));
        }
        self.state
            .write_into(&mut model)
            .map_err(|e| CliError::ShapeMismatch(e.to_string()))?;
        Ok(model)
    }
}
