//! Command-line front end of the photonic CNN accelerator model: MNIST IDX
//! loading, run configuration, checkpoints, reports and the `train`,
//! `infer`, `perf`, `sweep` and `report` commands.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | all requested outputs written |
//! | 2 | bad command-line usage |
//! | 3 | invalid configuration |
//! | 4 | input file not found |
//! | 5 | malformed IDX file |
//! | 6 | training diverged |
//! | 7 | checkpoint does not match the network |
//! | 8 | invalid device sheet |
//! | 9 | malformed checkpoint |
//! | 10 | other I/O failure |
//! | 11 | other model error |

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod idx;
pub mod manifest;
pub mod report;

pub use error::{CliError, Result};
