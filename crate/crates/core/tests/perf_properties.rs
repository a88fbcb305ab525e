use phocnn_core::cnn::{build_network, Benchmark, NetworkConfig, Stage, StageKind};
use phocnn_core::perf::{
    backward_latency, closed_form_fe_latency, count_operations, energy_report, forward_latency, pipeline_schedule,
    replay_schedule, throughput, DeviceSheet, EventKind, PowerMode, TimingParams,
};
use phocnn_core::rng;
use proptest::prelude::*;
use rand::Rng;

/// A random network under the stage grammar: conv groups with repeats,
/// ReLU and pooling, then an optional FC head.
fn random_grammar(seed: u64) -> NetworkConfig {
    let mut r = rng::stream(seed, &[0x80]);
    let mut side = 28 * r.random_range(1..=5usize);
    let input = side;
    let mut stages = Vec::new();
    let mut channels = 3;
    for _ in 0..r.random_range(1..=5usize) {
        for _ in 0..r.random_range(1..=2usize) {
            channels = [4, 8, 16, 32, 64][r.random_range(0..5)];
            stages.push(Stage::conv(if r.random_bool(0.8) { 3 } else { 1 }, channels, r.random_range(1..=3)));
            stages.push(Stage::relu());
        }
        if side >= 2 && r.random_bool(0.85) {
            stages.push(Stage::pool(2));
            side /= 2;
        }
    }
    let classes = if r.random_bool(0.7) {
        for _ in 0..r.random_range(0..=2usize) {
            stages.push(Stage::fc(r.random_range(8..=64), 1));
            stages.push(Stage::relu());
        }
        let c = r.random_range(2..=10);
        stages.push(Stage::fc(c, 1));
        c
    } else {
        channels * side * side
    };
    NetworkConfig {
        name: format!("random-{seed}"),
        stages,
        input_size: (input, input),
        input_channels: 3,
        num_classes: classes,
    }
}

#[test]
fn closed_form_equals_replay() {
    let nets = Benchmark::ALL
        .iter()
        .map(|&b| build_network(b))
        .chain((0..20).map(random_grammar));
    let t = TimingParams::default();
    for net in nets {
        let closed = closed_form_fe_latency(&net, &t).unwrap();
        let replay = replay_schedule(&net, &t).unwrap().fe_latency_ps();
        assert_eq!(closed, replay, "{}", net.name);
    }
}

#[test]
fn vgg_a_operation_count() {
    // hand summation of 2·k²·Cin·Cout·H·W over the eight convolutions plus
    // the three FC layers
    assert_eq!(count_operations(&build_network(Benchmark::VggA)).unwrap(), 15_218_180_096);
    assert_eq!(count_operations(&build_network(Benchmark::LeNetA)).unwrap(), 744_432);
}

#[test]
fn vgg_a_reference_latencies() {
    let net = build_network(Benchmark::VggA);
    let t = TimingParams::default();
    assert_eq!(closed_form_fe_latency(&net, &t).unwrap(), 153_600.0);
    assert_eq!(forward_latency(&net, &t).unwrap(), 154_100.0);
    assert_eq!(backward_latency(&net, &t).unwrap(), 480.0);
    assert_eq!(backward_latency(&build_network(Benchmark::LeNetA), &t).unwrap(), 480.0);
}

#[test]
fn timeline_widths_match_network() {
    let net = build_network(Benchmark::VggA);
    let tl = pipeline_schedule(&net, &TimingParams::default()).unwrap();
    for (stage, width) in [(1, 64), (2, 128), (3, 256), (4, 512), (5, 512)] {
        let done: Vec<_> = tl
            .events
            .iter()
            .filter(|e| e.stage == stage && e.kind == EventKind::Convolved)
            .collect();
        assert!(!done.is_empty(), "stage {stage}");
        assert!(done.iter().all(|e| e.features == width), "stage {stage}");
    }
    assert!(tl.events.windows(2).all(|w| w[0].time_ps <= w[1].time_ps));
}

fn field(t: &mut TimingParams, i: usize) -> &mut f64 {
    match i {
        0 => &mut t.t_sm,
        1 => &mut t.t_photodiode,
        2 => &mut t.t_relu,
        3 => &mut t.t_pool,
        4 => &mut t.t_interface,
        j => &mut t.t_b_components[j - 5],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn latency_is_monotone_in_every_delay(
        seed in 0u64..40,
        i in 0usize..12,
        base in prop::collection::vec(1.0f64..100.0, 12),
        bump in 0.0f64..200.0,
    ) {
        let net = if seed < 6 { build_network(Benchmark::ALL[seed as usize]) } else { random_grammar(seed) };
        let mut t = TimingParams::default();
        for (j, v) in base.iter().enumerate() {
            *field(&mut t, j) = if j == 0 { v * 8.0 } else { *v };
        }
        let mut u = t.clone();
        *field(&mut u, i) += bump;
        prop_assert!(forward_latency(&net, &u).unwrap() >= forward_latency(&net, &t).unwrap());
        prop_assert!(backward_latency(&net, &u).unwrap() >= backward_latency(&net, &t).unwrap());
    }

    #[test]
    fn breakdown_sums_to_total(scale in 0.0f64..10.0, per_unit in any::<bool>(), gops in 0.0f64..1e6) {
        let mode = if per_unit { PowerMode::PerUnit } else { PowerMode::Aggregate };
        let r = energy_report(&DeviceSheet::default().scaled_power(scale), gops, mode).unwrap();
        let mut sum = 0.0;
        for (_, p) in &r.breakdown {
            sum += p;
        }
        prop_assert_eq!(sum, r.total_power_mw);
    }

    #[test]
    fn halving_delays_doubles_throughput(seed in 0u64..26) {
        let net = if seed < 6 { build_network(Benchmark::ALL[seed as usize]) } else { random_grammar(seed) };
        let t = TimingParams::default();
        let a = throughput(&net, &t).unwrap();
        let b = throughput(&net, &t.scaled(0.5)).unwrap();
        prop_assert!((b.inference_gops / a.inference_gops - 2.0).abs() < 1e-12);
        prop_assert!((b.training_gops / a.training_gops - 2.0).abs() < 1e-12);
    }
}

#[test]
fn random_grammars_are_valid() {
    for s in 0..20 {
        let net = random_grammar(s);
        net.validate().unwrap();
        assert!(net.stages.iter().any(|st| st.kind == StageKind::Conv));
    }
}
