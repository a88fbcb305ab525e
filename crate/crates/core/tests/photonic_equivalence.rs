mod common;

use common::{rand_positive, rand_tensor, stream, toy_model, toy_network};
use phocnn_core::cnn::ops::{backward_layer, conv_forward, fc_forward, same_padding, sgd_update};
use phocnn_core::cnn::{encode_target, TrainParams};
use phocnn_core::noise::NoiseModel;
use phocnn_core::photonic::{
    backprop_layer_photonic, backward_pass_photonic, execute_pconv, fc_mvm, plan_pconv, weight_update_photonic, MvmPlan,
    PhotonicModel,
};
use phocnn_core::tensor::max_relative_error;
use phocnn_core::Tensor;
use rand::Rng;

const TOL: f64 = 1e-9;
const FLOOR: f64 = 1e-6;
const INSTANCES: u64 = 1000;

#[test]
fn pconv_matches_conv() {
    let off = NoiseModel::off();
    for i in 0..INSTANCES {
        let mut r = stream(i);
        let k = if r.random_bool(0.8) { 3 } else { 1 };
        let (h, w) = (r.random_range(1..=9usize), r.random_range(1..=9usize));
        let (c, f) = (r.random_range(1..=3usize), r.random_range(1..=4usize));
        let pad = same_padding(k);
        let x = rand_tensor(&[c, h, w], &mut r);
        let wt = rand_tensor(&[f, c, k, k], &mut r);
        let b = rand_tensor(&[f], &mut r);
        let plan = plan_pconv((h, w), k, f, pad).unwrap();
        let (p, counters) = execute_pconv(&plan, &x, &wt, &b, &off, &mut r).unwrap();
        let g = conv_forward(&x, &wt, &b, 1, pad).unwrap();
        assert_eq!(p.shape(), g.shape());
        assert_eq!(counters.saturations, 0);
        assert!(max_relative_error(p.data(), g.data(), FLOOR) <= TOL, "instance {i}");
    }
}

#[test]
fn mvm_matches_fc() {
    let off = NoiseModel::off();
    for i in 0..INSTANCES {
        let mut r = stream(INSTANCES + i);
        let (n_in, n_out) = (r.random_range(1..=80usize), r.random_range(1..=12usize));
        let x = rand_tensor(&[n_in], &mut r);
        let w = rand_tensor(&[n_out, n_in], &mut r);
        let b = rand_tensor(&[n_out], &mut r);
        let plan = MvmPlan::new(n_in, n_out, r.random_range(1..=n_in)).unwrap();
        let (p, _) = fc_mvm(&plan, &x, &w, &b, &off, &mut r).unwrap();
        let g = fc_forward(&x, &w, &b).unwrap();
        assert!(max_relative_error(p.data(), g.data(), FLOOR) <= TOL, "instance {i}");
    }
}

#[test]
fn photonic_backprop_matches_golden() {
    let off = NoiseModel::off();
    for i in 0..INSTANCES {
        let mut r = stream(2 * INSTANCES + i);
        let (n, next) = (r.random_range(1..=40usize), r.random_range(1..=10usize));
        let delta_next = rand_tensor(&[next], &mut r);
        let w_next = rand_tensor(&[next, n], &mut r);
        let z = rand_tensor(&[n], &mut r);
        let (p, _) = backprop_layer_photonic(&delta_next, &w_next, &z, &off, &mut r).unwrap();
        let g = backward_layer(&delta_next, &w_next, &z).unwrap();
        assert!(max_relative_error(p.data(), g.data(), FLOOR) <= TOL, "instance {i}");
    }
}

#[test]
fn photonic_update_matches_sgd() {
    let off = NoiseModel::off();
    for i in 0..INSTANCES {
        let mut r = stream(3 * INSTANCES + i);
        let params = TrainParams {
            learning_rate: r.random_range(0.001..0.5),
            batch_size: 1,
            ..TrainParams::default()
        };
        let (d, o, c) = (r.random_range(-1.0..1.0), r.random_range(0.0..1.0), r.random_range(-1.0..1.0));
        let u = weight_update_photonic(d, o, c, &params, &off, 10.0, &mut r).unwrap();
        let (w, _) = sgd_update(
            &Tensor::new([1, 1], vec![c]).unwrap(),
            &Tensor::vector(vec![0.0]),
            &[Tensor::vector(vec![d])],
            &[Tensor::vector(vec![o])],
            &params,
        )
        .unwrap();
        assert!(max_relative_error(&[u.value], w.data(), FLOOR) <= TOL, "instance {i}");
    }
}

/// Whole networks: forward outputs and every layer's delta agree with the
/// golden model when all noise is off.
#[test]
fn toy_networks_forward_and_backward() {
    let off = NoiseModel::off();
    for seed in 0..200u64 {
        let net = toy_network(seed);
        let m = toy_model(&net, seed);
        let pm = PhotonicModel::program(&m, &off).unwrap();
        let mut r = stream(seed);
        let [c, h, w] = m.input_shape();
        let x = rand_positive(&[c, h, w], &mut r);
        let y = encode_target(r.random_range(0..net.num_classes), net.num_classes, 0.1).unwrap();
        let g = m.forward(&x).unwrap();
        let (p, _) = pm.forward(&x, seed).unwrap();
        assert!(max_relative_error(g.output().data(), p.output().data(), FLOOR) <= TOL, "net {seed}");
        let gd = m.backward(&g, &y).unwrap();
        let (pd, _) = backward_pass_photonic(&m, &pm.conductances, &p, &y, &off, seed).unwrap();
        for (a, b) in gd.iter().zip(&pd) {
            match (a, b) {
                (Some(a), Some(b)) => assert!(max_relative_error(a.data(), b.data(), FLOOR) <= TOL, "net {seed}"),
                (None, None) => {}
                _ => panic!("delta layout differs on net {seed}"),
            }
        }
    }
}
