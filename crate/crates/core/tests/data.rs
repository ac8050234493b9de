use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use pcdnet::blend::CameraIntrinsics;
use pcdnet::data::{
    box_face_areas, make_dataset, random_spec, render_silhouette, Category, DatasetConfig, Primitive, ShapeSpec, Split,
};
use pcdnet::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((observed.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn sphere_samples_have_constant_radius() {
    let spec = ShapeSpec::new(Primitive::Sphere { radius: 0.3 }, Matrix3::identity(), [0.0, 0.1, 2.0]);
    let pts: Tensor<f64> = spec.sample_surface(500, &mut ChaCha8Rng::seed_from_u64(1));
    for p in pts.rows() {
        let r = (Vector3::new(p[0], p[1], p[2]) - Vector3::new(0.0, 0.1, 2.0)).norm();
        assert!((r - 0.3).abs() < 1e-6);
    }
}

#[test]
fn box_points_lie_on_one_face_with_area_proportional_counts() {
    let half = [0.1, 0.2, 0.35];
    let spec = ShapeSpec::new(Primitive::Box { half }, Matrix3::identity(), [0.0, 0.0, 2.0]);
    let n = 20000;
    let pts: Tensor<f64> = spec.sample_surface(n, &mut ChaCha8Rng::seed_from_u64(2));
    let mut counts = [0.0; 6];
    for p in pts.rows() {
        let l = [p[0], p[1], p[2] - 2.0];
        let (gap, face) = (0..6)
            .map(|f| {
                let a = f / 2;
                let s = if f % 2 == 0 { 1.0 } else { -1.0 };
                ((l[a] - s * half[a]).abs(), f)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert!(gap < 1e-6, "point {l:?} is off the surface");
        for a in 0..3 {
            assert!(l[a].abs() <= half[a] + 1e-12);
        }
        counts[face] += 1.0;
    }
    let areas = box_face_areas(half);
    let total: f64 = areas.iter().sum();
    let expected: Vec<f64> = areas.iter().map(|a| a / total * n as f64).collect();
    assert!(chi_square_p(&counts, &expected) > 0.01);
}

#[test]
fn sphere_silhouette_radius_matches_projection() {
    let (z, r) = (2.0, 0.4);
    let cam = CameraIntrinsics::for_image(64, 64);
    let spec = ShapeSpec::new(Primitive::Sphere { radius: r }, Matrix3::identity(), [0.0, 0.0, z]);
    let img: Tensor<f64> = render_silhouette(&spec, &cam, 64, 64).unwrap();
    let expected = cam.fx * r / (z * z - r * r).sqrt();
    let area: f64 = img.data().iter().sum();
    let measured = (area / std::f64::consts::PI).sqrt();
    assert!((measured - expected).abs() < 1.0, "{measured} vs {expected}");
    // Centre row extent.
    let row = &img.data()[32 * 64..33 * 64];
    let width: f64 = row.iter().sum();
    assert!((width / 2.0 - expected).abs() < 1.0);
}

#[test]
fn gt_points_project_onto_silhouette() {
    let cam = CameraIntrinsics::for_image(64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut hits, mut total) = (0, 0);
    for _ in 0..10 {
        for cat in Category::ALL {
            let spec = random_spec(cat, &mut rng);
            let img: Tensor<f32> = render_silhouette(&spec, &cam, 64, 64).unwrap();
            let pts: Tensor<f64> = spec.sample_surface(300, &mut rng);
            for p in pts.rows() {
                let (u, v) = cam.project([p[0], p[1], p[2]]);
                assert!((0.0..64.0).contains(&u) && (0.0..64.0).contains(&v));
                total += 1;
                if img.data()[v as usize * 64 + u as usize] > 0.0 {
                    hits += 1;
                }
            }
        }
    }
    assert!(hits as f64 >= 0.99 * total as f64, "{hits}/{total}");
}

#[test]
fn rendering_is_deterministic() {
    let cam = CameraIntrinsics::for_image(32, 32);
    let spec = random_spec(Category::Torus, &mut ChaCha8Rng::seed_from_u64(4));
    let a: Tensor<f32> = render_silhouette(&spec, &cam, 32, 32).unwrap();
    let b: Tensor<f32> = render_silhouette(&spec, &cam, 32, 32).unwrap();
    assert_eq!(a, b);
}

#[test]
fn same_seed_same_bytes() {
    let cfg = DatasetConfig {
        per_category: 3,
        image_size: 16,
        points: 16,
        ..Default::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        make_dataset(&cfg, 11).unwrap().save(d.path()).unwrap();
    }
    for f in ["index.json", "images/box-0001.pcdt", "clouds/torus-0002.pcdt"] {
        assert_eq!(
            std::fs::read(dirs[0].path().join(f)).unwrap(),
            std::fs::read(dirs[1].path().join(f)).unwrap()
        );
    }
}

#[test]
fn nearest_centroid_classifier_separates_categories() {
    let cfg = DatasetConfig {
        per_category: 100,
        points: 1,
        ..Default::default()
    };
    let d = make_dataset(&cfg, 0).unwrap();
    let mut centroids: BTreeMap<Category, (Vec<f64>, usize)> = BTreeMap::new();
    for s in d.split(Split::Train) {
        let e = centroids
            .entry(s.category)
            .or_insert_with(|| (vec![0.0; s.image.numel()], 0));
        e.0.iter_mut().zip(s.image.data()).for_each(|(a, &b)| *a += b as f64);
        e.1 += 1;
    }
    let (mut right, mut total) = (0, 0);
    for s in d.split(Split::Test) {
        let best = centroids
            .iter()
            .map(|(c, (sum, n))| {
                let dist: f64 = sum
                    .iter()
                    .zip(s.image.data())
                    .map(|(a, &b)| (a / *n as f64 - b as f64).powi(2))
                    .sum();
                (dist, *c)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
            .1;
        right += (best == s.category) as usize;
        total += 1;
    }
    let acc = right as f64 / total as f64;
    assert!(acc > 0.8, "nearest-centroid accuracy {acc}");
}
