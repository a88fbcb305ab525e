#![allow(dead_code)]

use phocnn_core::cnn::{Model, NetworkConfig, Stage};
use phocnn_core::rng::{self, Stream};
use phocnn_core::Tensor;
use rand::Rng;

pub fn rand_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(-1.0..1.0))
}

pub fn rand_positive(shape: &[usize], r: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(0.0..1.0))
}

/// A small random network: up to three conv stages (each optionally
/// followed by ReLU and pooling), then up to two FC stages. At most
/// 64 parameters per layer.
pub fn toy_network(seed: u64) -> NetworkConfig {
    let mut r = rng::stream(seed, &[0x70]);
    let side = r.random_range(2..=6usize);
    let channels = r.random_range(1..=2usize);
    let mut stages = Vec::new();
    let (mut c, mut s) = (channels, side);
    for _ in 0..r.random_range(0..=2usize) {
        let k = if r.random_bool(0.7) { 3 } else { 1 };
        let out = r.random_range(1..=3usize);
        if (k * k * c + 1) * out > 64 {
            break;
        }
        stages.push(Stage::conv(k, out, 1));
        c = out;
        if r.random_bool(0.7) {
            stages.push(Stage::relu());
        }
        if s >= 2 && r.random_bool(0.4) {
            stages.push(Stage::pool(2));
            s /= 2;
        }
    }
    let classes = r.random_range(1..=4usize);
    let mut width = c * s * s;
    if width * 4 < 64 && r.random_bool(0.5) {
        let hidden = r.random_range(2..=4usize).min(64 / (width + 1)).max(1);
        stages.push(Stage::fc(hidden, 1));
        stages.push(Stage::relu());
        width = hidden;
    }
    if (width + 1) * classes <= 64 {
        stages.push(Stage::fc(classes, 1));
    } else {
        stages.push(Stage::fc(1, 1));
    }
    let classes = if (width + 1) * classes <= 64 { classes } else { 1 };
    if r.random_bool(0.5) {
        stages.push(Stage::relu());
    }
    NetworkConfig {
        name: "toy".to_string(),
        stages,
        input_size: (side, side),
        input_channels: channels,
        num_classes: classes,
    }
}

/// A model of `net` with non-zero random biases.
pub fn toy_model(net: &NetworkConfig, seed: u64) -> Model {
    let mut m = Model::init(net, seed, 0.0).unwrap();
    let mut r = rng::stream(seed, &[0x71]);
    for l in &mut m.layers {
        if let Some((_, b)) = l.params_mut() {
            for v in b.data_mut() {
                *v = r.random_range(-0.5..0.5);
            }
        }
    }
    m
}

pub fn stream(seed: u64) -> Stream {
    rng::stream(seed, &[0x72])
}
