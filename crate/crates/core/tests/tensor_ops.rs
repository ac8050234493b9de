mod common;

use common::*;
use pcdnet::tensor::{io, STD_EPS};
use pcdnet::{Graph, Tensor, Var};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    for _ in 0..30 {
        let (m, k, n) = (r.random_range(1..9), r.random_range(1..9), r.random_range(1..9));
        let a = rand_tensor(&[m, k], -2.0, 2.0, &mut r);
        let b = rand_tensor(&[k, n], -2.0, 2.0, &mut r);
        let mut g = Graph::new();
        let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
        let c = g.matmul(va, vb).unwrap();
        assert_eq!(g.shape(c), [m, n]);
        let want = matmul(a.data(), b.data(), m, k, n);
        assert!(max_abs_diff(g.value(c).data(), &want) < 1e-12);
    }
}

type GraphBinary = fn(&mut Graph<f64>, Var, Var) -> pcdnet::Result<Var>;
type ScalarBinary = fn(f64, f64) -> f64;

#[test]
fn broadcasting_matches_nested_loops() {
    let mut r = rng(2);
    let shapes: [(&[usize], &[usize]); 5] = [
        (&[3, 1, 4], &[1, 5, 4]),
        (&[2, 3], &[3]),
        (&[4, 1], &[1, 6]),
        (&[1], &[2, 2, 2]),
        (&[2, 3, 4], &[2, 3, 4]),
    ];
    for (sa, sb) in shapes {
        let a = rand_tensor(sa, -1.0, 1.0, &mut r);
        let b = rand_tensor(sb, 0.5, 2.0, &mut r);
        let ops: [(GraphBinary, ScalarBinary); 4] = [
            (|g, x, y| g.add(x, y), |x, y| x + y),
            (|g, x, y| g.sub(x, y), |x, y| x - y),
            (|g, x, y| g.mul(x, y), |x, y| x * y),
            (|g, x, y| g.div(x, y), |x, y| x / y),
        ];
        for (op, f) in ops {
            let mut g = Graph::new();
            let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
            let out: pcdnet::Result<pcdnet::Var> = op(&mut g, va, vb);
            let out = out.unwrap();
            let (shape, want) = broadcast_binary(a.data(), sa, b.data(), sb, f);
            assert_eq!(g.shape(out), shape.as_slice());
            assert_eq!(g.value(out).data(), want.as_slice());
        }
    }
}

#[test]
fn incompatible_broadcast_is_dimension_error() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::zeros([2, 3]));
    let b = g.constant(Tensor::zeros([4]));
    assert_eq!(g.add(a, b).unwrap_err().category(), "dimension");
}

#[test]
fn reduce_stats_matches_two_pass() {
    let mut r = rng(3);
    for axes in [vec![0], vec![1, 2], vec![0, 2], vec![0, 1, 2]] {
        let x = rand_tensor(&[3, 4, 5], -3.0, 3.0, &mut r);
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let (m, s) = g.reduce_stats(v, &axes).unwrap();
        let (wm, ws) = stats(x.data(), &[3, 4, 5], &axes, STD_EPS);
        assert!(max_abs_diff(g.value(m).data(), &wm) < 1e-12);
        assert!(max_abs_diff(g.value(s).data(), &ws) < 1e-12);
    }
}

#[test]
fn conv2d_matches_six_loops() {
    let mut r = rng(4);
    for _ in 0..20 {
        let (ci, co) = (r.random_range(1..4), r.random_range(1..4));
        let (h, w) = (r.random_range(3..10), r.random_range(3..10));
        let (stride, pad) = (r.random_range(1..3), r.random_range(0..2));
        let x = rand_tensor(&[ci, h, w], -1.0, 1.0, &mut r);
        let k = rand_tensor(&[co, ci, 3, 3], -1.0, 1.0, &mut r);
        let mut g = Graph::new();
        let (vx, vk) = (g.constant(x.clone()), g.constant(k.clone()));
        let y = g.conv2d(vx, vk, stride, pad).unwrap();
        let (oh, ow, want) = conv2d(x.data(), (ci, h, w), k.data(), (co, 3, 3), stride, pad);
        assert_eq!(g.shape(y), [co, oh, ow]);
        assert!(max_abs_diff(g.value(y).data(), &want) < 1e-12);
    }
}

#[test]
fn bilinear_matches_scalar_formula_including_outside() {
    let mut r = rng(5);
    let (c, h, w) = (3, 5, 7);
    let map = rand_tensor(&[c, h, w], -1.0, 1.0, &mut r);
    let n = 200;
    let coords = Tensor::new(
        [n, 2],
        (0..n)
            .flat_map(|_| {
                [
                    r.random_range(-2.0..w as f64 + 1.0),
                    r.random_range(-2.0..h as f64 + 1.0),
                ]
            })
            .collect(),
    )
    .unwrap();
    let mut g = Graph::new();
    let (vm, vc) = (g.constant(map.clone()), g.constant(coords.clone()));
    let out = g.bilinear_sample(vm, vc).unwrap();
    for p in 0..n {
        let (u, v) = (coords.data()[2 * p], coords.data()[2 * p + 1]);
        for ch in 0..c {
            let want = bilinear(map.data(), h, w, ch, u, v);
            assert!((g.value(out).data()[p * c + ch] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn bilinear_at_integer_coordinates_reads_pixels() {
    let map = Tensor::new([1, 2, 3], vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]).unwrap();
    let coords = Tensor::new([3, 2], vec![0.0, 0.0, 2.0, 1.0, 1.0, 1.0]).unwrap();
    let mut g = Graph::<f64>::new();
    let (m, c) = (g.constant(map), g.constant(coords));
    let out = g.bilinear_sample(m, c).unwrap();
    assert_eq!(g.value(out).data(), &[0.0, 12.0, 11.0]);
}

#[test]
fn backward_visits_shared_nodes_once() {
    // y = x * x + x; dy/dx = 2x + 1 even though x is used three times.
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new([2], vec![1.5, -2.0]).unwrap(), true);
    let sq = g.mul(x, x).unwrap();
    let y = g.add(sq, x).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[4.0, -3.0]);
}

#[test]
fn non_scalar_backward_is_contract_error() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros([2]), true);
    assert_eq!(g.backward(x).unwrap_err().category(), "contract");
}

#[test]
fn pcdt_round_trip_is_bit_exact() {
    let mut r = rng(6);
    let t64 = rand_tensor(&[2, 3, 4], -1e6, 1e6, &mut r);
    assert_eq!(io::decode::<f64>(&io::encode(&t64)).unwrap(), t64);
    let t32: Tensor<f32> = t64.cast();
    let bytes = io::encode(&t32);
    assert_eq!(&bytes[..4], b"PCDT");
    assert_eq!(io::decode::<f32>(&bytes).unwrap(), t32);
    // Wrong dtype, truncation and bad magic are all rejected.
    assert!(io::decode::<f64>(&bytes).is_err());
    assert!(io::decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(io::decode::<f32>(&bad).is_err());
}

fn backward_of(x: &Tensor<f64>, w: &Tensor<f64>, seed: &Tensor<f64>) -> Vec<f64> {
    // loss = sum(seed * relu-free composite(x))
    let mut g = Graph::new();
    let vx = g.leaf(x.clone(), true);
    let vw = g.constant(w.clone());
    let y = g.matmul(vx, vw).unwrap();
    let (m, s) = g.reduce_stats(y, &[0]).unwrap();
    let z = g.sub(y, m).unwrap();
    let z = g.div(z, s).unwrap();
    let vs = g.constant(seed.clone());
    let l = g.mul(z, vs).unwrap();
    let l = g.sum(l);
    g.backward(l).unwrap();
    g.grad(vx).unwrap().data().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Backward is linear in the upstream gradient.
    #[test]
    fn backward_is_linear_in_upstream(seed in 0u64..10_000, alpha in -3.0f64..3.0) {
        let mut r = rng(seed);
        let x = rand_tensor(&[5, 3], -1.0, 1.0, &mut r);
        let w = rand_tensor(&[3, 4], -1.0, 1.0, &mut r);
        let s1 = rand_tensor(&[5, 4], -1.0, 1.0, &mut r);
        let s2 = rand_tensor(&[5, 4], -1.0, 1.0, &mut r);
        let combo = Tensor::new([5, 4], s1.data().iter().zip(s2.data()).map(|(a, b)| a + alpha * b).collect()).unwrap();
        let g1 = backward_of(&x, &w, &s1);
        let g2 = backward_of(&x, &w, &s2);
        let gc = backward_of(&x, &w, &combo);
        let want: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + alpha * b).collect();
        prop_assert!(max_abs_diff(&gc, &want) < 1e-9);
    }

    #[test]
    fn concat_then_narrow_is_identity(a in 1usize..5, b in 1usize..5, rows in 1usize..4, seed in 0u64..1000) {
        let mut r = rng(seed);
        let x = rand_tensor(&[rows, a], -1.0, 1.0, &mut r);
        let y = rand_tensor(&[rows, b], -1.0, 1.0, &mut r);
        let mut g = Graph::new();
        let (vx, vy) = (g.constant(x.clone()), g.constant(y.clone()));
        let c = g.concat(&[vx, vy], 1).unwrap();
        let back = g.narrow(c, 1, a, b).unwrap();
        prop_assert_eq!(g.value(back), &y);
    }
}
