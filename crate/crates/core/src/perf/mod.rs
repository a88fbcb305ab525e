//! Analytical performance model: stage timing, the tile pipeline schedule,
//! operation counts, throughput and energy.

pub mod energy;
pub mod ops;
pub mod schedule;
pub mod timing;

pub use energy::{energy_report, BaselineConstants, Component, DeviceSheet, EnergyReport, PowerMode};
pub use ops::{count_operations, throughput, Throughput};
pub use schedule::{
    backward_latency, closed_form_fe_latency, forward_latency, pipeline_schedule, replay_schedule, Event, EventKind,
    PipelineTimeline, FEATURES_PER_MOVE,
};
pub use timing::TimingParams;
