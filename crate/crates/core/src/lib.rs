//! Functional and analytical model of an all-photonic CNN accelerator.
//!
//! The crate is split along the accelerator's datapath:
//!
//! - [`cnn`]: exact floating-point CNN (forward, backprop, SGD). This is the
//!   golden reference every other path is checked against.
//! - [`noise`]: analog non-idealities (converter resolution, memristor
//!   states, SNR sites, propagation loss) as composable transforms.
//! - [`photonic`]: microdisk/DWDM convolution plans, the matrix-vector
//!   multiplier, the transposed backprop path and memristor weight updates.
//! - [`perf`]: pipeline schedule, latency, throughput and energy models.
//! - [`training`] and [`experiments`]: training loop and evaluation drivers
//!   that tie the datapaths together.
//!
//! Everything here is `no_std` (with `alloc`). File formats, configuration
//! and the command line live in the companion `phocnn` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cnn;
pub mod error;
pub mod experiments;
pub mod noise;
pub mod perf;
pub mod photonic;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
