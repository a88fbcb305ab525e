//! Operation counts and throughput. A multiply-accumulate counts as two
//! operations; pooling and ReLU are not counted.

use super::schedule::{backward_latency, closed_form_fe_latency, forward_latency};
use super::timing::TimingParams;
use crate::cnn::{NetworkConfig, StageKind};
use crate::error::Result;

/// Operations of one forward pass.
pub fn count_operations(network: &NetworkConfig) -> Result<u64> {
    let mut ops = 0u64;
    for l in network.layers()? {
        let (cin, hi, wi) = l.input;
        let (cout, ho, wo) = l.output;
        ops += match l.kind {
            StageKind::Conv => 2 * (l.filter * l.filter * cin * cout * ho * wo) as u64,
            StageKind::Fc => 2 * (cin * hi * wi * cout) as u64,
            StageKind::Pool | StageKind::Relu => 0,
        };
    }
    Ok(ops)
}

/// Modelled throughput in GOPS/s.
///
/// Inference can start a new image as soon as feature extraction is free,
/// so its initiation interval is the FE latency. A training step must finish
/// its backward pass before the next image, so its interval is the forward
/// plus backward latency. Both count forward-pass operations only.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Throughput {
    pub operations: u64,
    pub inference_interval_ps: f64,
    pub training_interval_ps: f64,
    pub inference_gops: f64,
    pub training_gops: f64,
}

pub fn throughput(network: &NetworkConfig, timing: &TimingParams) -> Result<Throughput> {
    let operations = count_operations(network)?;
    let fe = closed_form_fe_latency(network, timing)?;
    let inference_interval_ps = if fe > 0.0 { fe } else { forward_latency(network, timing)? };
    let training_interval_ps = forward_latency(network, timing)? + backward_latency(network, timing)?;
    // operations per picosecond, times 1000, is GOPS/s
    let rate = |interval: f64| {
        if interval > 0.0 {
            operations as f64 / interval * 1000.0
        } else {
            0.0
        }
    };
    Ok(Throughput {
        operations,
        inference_interval_ps,
        training_interval_ps,
        inference_gops: rate(inference_interval_ps),
        training_gops: rate(training_interval_ps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{build_network, Benchmark, Stage};
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn scalar_conv_is_two_ops() {
        let net = NetworkConfig {
            name: "s".to_string(),
            stages: vec![Stage::conv(1, 1, 1)],
            input_size: (1, 1),
            input_channels: 1,
            num_classes: 1,
        };
        assert_eq!(count_operations(&net).unwrap(), 2);
    }

    #[test]
    fn halving_delays_doubles_throughput() {
        let net = build_network(Benchmark::VggA);
        let t = TimingParams::default();
        let a = throughput(&net, &t).unwrap();
        let b = throughput(&net, &t.scaled(0.5)).unwrap();
        assert_eq!(b.inference_gops, 2.0 * a.inference_gops);
        assert_eq!(b.training_gops, 2.0 * a.training_gops);
    }
}
