mod common;

use common::{iou, rand_vec, rng};
use pcdnet::metrics::nn::nearest;
use pcdnet::metrics::{chamfer_distance, iou_voxel, l2_penalty, MetricsReport, NNBackend};
use pcdnet::{Graph, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const BACKENDS: [NNBackend; 3] = [
    NNBackend::BruteForce,
    NNBackend::UniformGrid,
    NNBackend::UniformGridWithCell { cell_size: 0.05 },
];

fn cloud(n: usize, r: &mut impl Rng) -> Vec<f64> {
    rand_vec(3 * n, -1.0, 1.0, r)
}

#[test]
fn chamfer_matches_exhaustive_oracle() {
    let mut r = rng(20);
    for _ in 0..40 {
        let (n, m) = (r.random_range(1..150), r.random_range(1..150));
        let (x, y) = (cloud(n, &mut r), cloud(m, &mut r));
        let want = common::chamfer(&x, &y);
        for b in BACKENDS {
            let got = chamfer_distance(&x, &y, b).unwrap();
            assert!((got - want).abs() < 1e-12 * want.max(1.0), "{b:?}");
        }
    }
}

#[test]
fn grid_nearest_indices_equal_brute_force_on_clustered_data() {
    // Clusters with large empty gaps stress the shell search.
    let mut r = rng(21);
    let mut targets = Vec::new();
    for c in 0..4 {
        let centre = [c as f64 * 3.0, (c % 2) as f64, 0.0];
        for _ in 0..50 {
            for x in centre {
                targets.push(x + r.random_range(-0.05..0.05));
            }
        }
    }
    let queries = rand_vec(3 * 300, -2.0, 11.0, &mut r);
    assert_eq!(
        nearest(&queries, &targets, NNBackend::UniformGrid),
        nearest(&queries, &targets, NNBackend::BruteForce)
    );
}

#[test]
fn chamfer_gradient_pulls_points_together() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new([1, 3], vec![1.0, 0.0, 0.0]).unwrap(), true);
    let y = g.constant(Tensor::new([1, 3], vec![0.0, 0.0, 0.0]).unwrap());
    let cd = pcdnet::metrics::chamfer(&mut g, x, y, NNBackend::UniformGrid).unwrap();
    assert_eq!(g.value(cd).item(), 2.0);
    g.backward(cd).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[4.0, 0.0, 0.0]);
}

#[test]
fn iou_matches_hash_set_oracle() {
    let mut r = rng(22);
    for _ in 0..40 {
        let (n, m) = (r.random_range(1..300), r.random_range(1..300));
        let (x, y) = (cloud(n, &mut r), cloud(m, &mut r));
        for res in [4, 16, 32] {
            let got = iou_voxel(&x, &y, res).unwrap();
            assert!((got - iou(&x, &y, res)).abs() < 1e-12);
        }
    }
}

#[test]
fn iou_edge_cases() {
    let x = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    assert_eq!(iou_voxel(&x, &x, 32).unwrap(), 1.0);
    let flat = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0];
    assert_eq!(iou_voxel(&flat, &flat, 32).unwrap_err().category(), "domain");
    assert_eq!(iou_voxel::<f64>(&[], &x, 32).unwrap_err().category(), "domain");
}

#[test]
fn l2_penalty_value_and_gradient() {
    let mut g = Graph::<f64>::new();
    let a = g.leaf(Tensor::new([2], vec![1.0, -2.0]).unwrap(), true);
    let b = g.leaf(Tensor::new([1, 1], vec![3.0]).unwrap(), true);
    let l = l2_penalty(&mut g, &[a, b], 0.5).unwrap();
    assert_eq!(g.value(l).item(), 7.0);
    g.backward(l).unwrap();
    assert_eq!(g.grad(a).unwrap().data(), &[1.0, -2.0]);
    assert_eq!(g.grad(b).unwrap().data(), &[3.0]);
}

#[test]
fn report_weights_categories_equally() {
    let rows = vec![("a", 1.0, 0.5), ("a", 3.0, 0.5), ("b", 10.0, 0.0)];
    let r = MetricsReport::from_samples(rows);
    assert_eq!(r.rows.len(), 3);
    assert_eq!(r.mean().cd, (2.0 + 10.0) / 2.0);
    assert_eq!(r.mean().samples, 3);
    assert!(r.to_csv().starts_with("category,samples,cd,iou\n"));
}

fn permute(x: &[f64], r: &mut impl Rng) -> Vec<f64> {
    let mut rows: Vec<&[f64]> = x.chunks(3).collect();
    rows.shuffle(r);
    rows.concat()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_symmetric_permutation_invariant_nonnegative(
        seed in 0u64..1_000_000, n in 1usize..200, m in 1usize..200, b in 0usize..3
    ) {
        let mut r = rng(seed);
        let (x, y) = (cloud(n, &mut r), cloud(m, &mut r));
        let backend = BACKENDS[b];
        let d = chamfer_distance(&x, &y, backend).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, chamfer_distance(&y, &x, backend).unwrap());
        let (px, py) = (permute(&x, &mut r), permute(&y, &mut r));
        prop_assert_eq!(d, chamfer_distance(&px, &py, backend).unwrap());
        prop_assert_eq!(chamfer_distance(&x, &x, backend).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_translation_invariant(seed in 0u64..1_000_000, t in prop::array::uniform3(-5.0f64..5.0)) {
        let mut r = rng(seed);
        let (x, y) = (cloud(40, &mut r), cloud(60, &mut r));
        let shift = |c: &[f64]| c.iter().enumerate().map(|(i, v)| v + t[i % 3]).collect::<Vec<_>>();
        let a = chamfer_distance(&x, &y, NNBackend::UniformGrid).unwrap();
        let b = chamfer_distance(&shift(&x), &shift(&y), NNBackend::UniformGrid).unwrap();
        prop_assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn chamfer_zero_iff_sets_coincide(seed in 0u64..1_000_000, n in 1usize..30) {
        let mut r = rng(seed);
        let x = cloud(n, &mut r);
        // Duplicating points keeps the distance at zero; moving one does not.
        let doubled = [x.clone(), x.clone()].concat();
        prop_assert_eq!(chamfer_distance(&x, &doubled, NNBackend::UniformGrid).unwrap(), 0.0);
        let mut moved = x.clone();
        moved[0] += 10.0;
        prop_assert!(chamfer_distance(&x, &moved, NNBackend::UniformGrid).unwrap() > 0.0);
    }
}
