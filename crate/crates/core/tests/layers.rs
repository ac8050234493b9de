mod common;

use common::*;
use pcdnet::blend::{adain_2d_to_3d, blend, CameraIntrinsics, FeatureSet};
use pcdnet::layers::{graphx_forward, Activation, EncoderConfig, GraphXParams, ParamStore, PointEncoder};
use pcdnet::tensor::STD_EPS;
use pcdnet::{Graph, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn run_graphx(p: &GraphXParams<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let mut g = Graph::new();
    let v = p.bind(&mut g, false);
    let vx = g.constant(x.clone());
    let out = graphx_forward(&mut g, vx, &v).unwrap();
    g.value(out).clone()
}

#[test]
fn graphx_identity_configuration_is_exact() {
    let mut r = rng(10);
    for n in [1, 4, 17] {
        for d in [1, 3, 8] {
            let x = rand_tensor(&[n, d], -5.0, 5.0, &mut r);
            let p = GraphXParams::new(
                Tensor::eye(n),
                Tensor::zeros([n]),
                vec![Tensor::eye(d)],
                Tensor::zeros([d]),
                Activation::Identity,
            )
            .unwrap();
            assert_eq!(run_graphx(&p, &x), x);
        }
    }
}

#[test]
fn graphx_matches_literal_loop_including_point_count_changes() {
    let mut r = rng(11);
    for trial in 0..50 {
        let n_in = r.random_range(1..12);
        let n_out = if trial % 2 == 0 { n_in } else { r.random_range(1..20) };
        let (d_in, d_out) = (r.random_range(1..7), r.random_range(1..7));
        let relu = trial % 3 == 0;
        let mix = rand_tensor(&[n_out, n_in], -1.0, 1.0, &mut r);
        let mb = rand_tensor(&[n_out], -1.0, 1.0, &mut r);
        let w = rand_tensor(&[d_in, d_out], -1.0, 1.0, &mut r);
        let b = rand_tensor(&[d_out], -1.0, 1.0, &mut r);
        let x = rand_tensor(&[n_in, d_in], -1.0, 1.0, &mut r);
        let act = if relu { Activation::Relu } else { Activation::Identity };
        let p = GraphXParams::new(mix.clone(), mb.clone(), vec![w.clone()], b.clone(), act).unwrap();
        let got = run_graphx(&p, &x);
        let oracle = GraphXOracle {
            mix: mix.data(),
            mix_bias: mb.data(),
            weight: w.data(),
            bias: b.data(),
            relu,
            n_in,
            n_out,
            d_in,
            d_out,
        };
        assert_eq!(got.shape(), [n_out, d_out]);
        assert!(max_abs_diff(got.data(), &oracle.apply(x.data())) < 1e-5);
    }
}

#[test]
fn factored_transform_equals_dense_product() {
    let mut r = rng(12);
    for _ in 0..50 {
        let n = r.random_range(1..10);
        let d_in = r.random_range(4..12);
        let k = r.random_range(1..=(d_in - 1) / 2);
        let d_out = r.random_range(1..8);
        let mix = rand_tensor(&[n, n], -1.0, 1.0, &mut r);
        let mb = rand_tensor(&[n], -1.0, 1.0, &mut r);
        let w1 = rand_tensor(&[d_in, k], -1.0, 1.0, &mut r);
        let w2 = rand_tensor(&[k, d_out], -1.0, 1.0, &mut r);
        let b = rand_tensor(&[d_out], -1.0, 1.0, &mut r);
        let dense = Tensor::new([d_in, d_out], matmul(w1.data(), w2.data(), d_in, k, d_out)).unwrap();
        let x = rand_tensor(&[n, d_in], -1.0, 1.0, &mut r);
        let f = GraphXParams::new(mix.clone(), mb.clone(), vec![w1, w2], b.clone(), Activation::Identity).unwrap();
        let d = GraphXParams::new(mix, mb, vec![dense], b, Activation::Identity).unwrap();
        assert!(run_graphx(&f, &x).max_abs_diff(&run_graphx(&d, &x)) < 1e-5);
    }
}

#[test]
fn factored_rank_must_be_below_half_width() {
    let t = |s: &[usize]| Tensor::<f64>::zeros(s.to_vec());
    let bad = GraphXParams::new(
        t(&[2, 2]),
        t(&[2]),
        vec![t(&[4, 2]), t(&[2, 3])],
        t(&[3]),
        Activation::Identity,
    );
    assert_eq!(bad.unwrap_err().category(), "configuration");
    let ok = GraphXParams::new(
        t(&[2, 2]),
        t(&[2]),
        vec![t(&[5, 2]), t(&[2, 3])],
        t(&[3]),
        Activation::Identity,
    );
    assert!(ok.is_ok());
}

#[test]
fn point_encoder_matches_per_point_loop() {
    let mut r = rng(13);
    let cfg = EncoderConfig {
        image_h: 8,
        image_w: 8,
        channels: vec![4, 6],
    };
    let mut store = ParamStore::<f64>::new();
    let enc = PointEncoder::new(&mut store, &cfg, &mut r);
    for t in store.tensors_mut() {
        *t = rand_tensor(t.shape(), -1.0, 1.0, &mut r);
    }
    let x = rand_tensor(&[9, 3], -1.0, 1.0, &mut r);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let vx = g.constant(x.clone());
    let outs = enc.forward(&mut g, &p, vx).unwrap();
    let params: Vec<&Tensor<f64>> = store.iter().map(|(_, t)| t).collect();
    for (pi, row) in x.rows().enumerate() {
        let mut h = row.to_vec();
        for (s, &c) in cfg.channels.iter().enumerate() {
            let (w, b) = (params[2 * s], params[2 * s + 1]);
            let d = h.len();
            h = (0..c)
                .map(|o| (b.data()[o] + (0..d).map(|i| h[i] * w.data()[i * c + o]).sum::<f64>()).max(0.0))
                .collect();
            let got = &g.value(outs[s]).data()[pi * c..(pi + 1) * c];
            assert!(max_abs_diff(got, &h) < 1e-12);
        }
    }
}

/// AdaIN output statistics for one random (map, points) pair.
fn adain_stats_error(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (c, h, w, n) = (
        r.random_range(1..6),
        r.random_range(2..9),
        r.random_range(2..9),
        r.random_range(2..60),
    );
    let map = rand_tensor(&[c, h, w], -2.0, 3.0, &mut r);
    let pts = rand_tensor(&[n, c], -0.5, 4.0, &mut r);
    let mut g = Graph::new();
    let (vm, vp) = (g.constant(map.clone()), g.constant(pts.clone()));
    let out = adain_2d_to_3d(&mut g, vm, vp).unwrap();
    let (mu_x, sigma_x) = stats(map.data(), &[c, h, w], &[1, 2], STD_EPS);
    let (_, sigma_y) = stats(pts.data(), &[n, c], &[0], STD_EPS);
    let (mu_o, sd_o) = stats(g.value(out).data(), &[n, c], &[0], 0.0);
    let mut worst = (0.0f64, 0.0f64);
    for ch in 0..c {
        // The epsilon inside sigma_Y shrinks the output spread slightly.
        let var_y = sigma_y[ch].powi(2) - STD_EPS;
        let expected_sd = sigma_x[ch] * (var_y / (var_y + STD_EPS)).sqrt();
        worst.0 = worst.0.max((mu_o[ch] - mu_x[ch]).abs());
        worst.1 = worst.1.max((sd_o[ch] - expected_sd).abs());
    }
    worst
}

#[test]
fn adain_transfers_image_statistics() {
    for seed in 0..50 {
        let (dm, ds) = adain_stats_error(seed);
        assert!(dm < 1e-4 && ds < 1e-3, "seed {seed}: mean err {dm}, std err {ds}");
    }
}

#[test]
fn feature_width_arithmetic() {
    let cfg = EncoderConfig::desk(64);
    let c = cfg.channel_sum();
    assert_eq!(c, 112);
    assert_eq!(FeatureSet::Full.width(&cfg), 2 * c + 3);
    assert_eq!(FeatureSet::ProjectionOnly.width(&cfg), c + 3);
    assert_eq!(FeatureSet::AdainOnly.width(&cfg), c + 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Permuting the points permutes AdaIN's output rows identically.
    #[test]
    fn adain_is_permutation_equivariant(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let (c, n) = (r.random_range(1..5), r.random_range(2..30));
        let map = rand_tensor(&[c, 4, 5], -1.0, 1.0, &mut r);
        let pts = rand_tensor(&[n, c], -1.0, 1.0, &mut r);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let permuted = Tensor::new([n, c], perm.iter().flat_map(|&i| pts.row(i).to_vec()).collect()).unwrap();
        let run = |p: &Tensor<f64>| {
            let mut g = Graph::new();
            let (vm, vp) = (g.constant(map.clone()), g.constant(p.clone()));
            let o = adain_2d_to_3d(&mut g, vm, vp).unwrap();
            g.value(o).clone()
        };
        let (a, b) = (run(&pts), run(&permuted));
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!(max_abs_diff(b.row(k), a.row(i)) < 1e-12);
        }
    }

    /// Blended features of a permuted cloud are the permuted features.
    #[test]
    fn blend_is_permutation_equivariant(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let n = r.random_range(2..20);
        let cam = CameraIntrinsics::for_image(16, 16);
        let cloud = Tensor::new([n, 3], (0..n).flat_map(|_| {
            [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), r.random_range(1.5..2.5)]
        }).collect()).unwrap();
        let maps = [rand_tensor(&[2, 8, 8], -1.0, 1.0, &mut r), rand_tensor(&[3, 4, 4], -1.0, 1.0, &mut r)];
        let feats = [rand_tensor(&[n, 2], -1.0, 1.0, &mut r), rand_tensor(&[n, 3], -1.0, 1.0, &mut r)];
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let permute = |t: &Tensor<f64>| {
            let d = t.shape()[1];
            Tensor::new([n, d], perm.iter().flat_map(|&i| t.row(i).to_vec()).collect()).unwrap()
        };
        let run = |c: &Tensor<f64>, f: &[Tensor<f64>; 2]| {
            let mut g = Graph::new();
            let vc = g.constant(c.clone());
            let vm: Vec<_> = maps.iter().map(|m| g.constant(m.clone())).collect();
            let vf: Vec<_> = f.iter().map(|m| g.constant(m.clone())).collect();
            let o = blend(&mut g, vc, &cam, &vm, &vf, (16, 16), FeatureSet::Full).unwrap();
            g.value(o).clone()
        };
        let a = run(&cloud, &feats);
        let b = run(&permute(&cloud), &[permute(&feats[0]), permute(&feats[1])]);
        prop_assert_eq!(a.shape()[1], 2 * 5 + 3);
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!(max_abs_diff(b.row(k), a.row(i)) < 1e-12);
        }
    }
}
