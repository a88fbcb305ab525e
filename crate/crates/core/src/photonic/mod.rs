//! Photonic datapath: microdisk/DWDM convolution, the fully-connected
//! matrix-vector multiplier, tiling, the analog backward path and memristor
//! weight storage.
//!
//! Optical signals are represented by their modulated amplitude. The carrier
//! divides out at the photodiode, and the split losses inside the
//! multiplier are compensated by the receiver gain, so with every noise site
//! disabled the photonic results equal the golden model.

pub mod backprop;
pub mod conductance;
pub mod datapath;
pub mod exec;
pub mod plan;
pub mod sites;
pub mod tile;

pub use backprop::{backprop_layer_photonic, backward_pass_photonic, modulate_error, ErrorSignals};
pub use conductance::{weight_update_photonic, ConductanceState, LayerConductance, UpdateOutcome};
pub use datapath::PhotonicModel;
pub use exec::{execute_pconv, fc_mvm, PhotonicSignal};
pub use plan::{plan_pconv, plan_pconv_with_channels, MvmPlan, PhotonicConvPlan};
pub use tile::{tile_input, StitchMap, Tile, TILE};
