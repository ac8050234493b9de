//! Inference: dense generation by chunking, and evaluation.

use super::model::{init_point_cloud, PcdNet};
use crate::blend::CameraIntrinsics;
use crate::data::Sample;
use crate::error::{config_err, Result};
use crate::metrics::{chamfer_distance, iou_voxel, MetricsReport, NNBackend, DEFAULT_RESOLUTION};
use crate::rng::{stream, Purpose};
use crate::tensor::{Element, Tensor};

/// Stream index of chunk `chunk` for the `item`-th image of a run.
pub fn cloud_stream_index(item: u64, chunk: u64) -> u64 {
    (item << 24) | chunk
}

/// Initial cloud for `(item, chunk)` under `seed`.
pub fn inference_cloud<T: Element>(
    model: &PcdNet<T>,
    cam: &CameraIntrinsics,
    seed: u64,
    item: u64,
    chunk: u64,
) -> Tensor<T> {
    let s = model.config.image_size;
    let mut rng = stream(seed, Purpose::InferCloud, cloud_stream_index(item, chunk));
    init_point_cloud(model.config.points, cam, (s, s), &mut rng)
}

/// Runs the model on `total / n_out` independent initial clouds and stacks
/// the outputs.
pub fn generate_dense<T: Element>(
    model: &PcdNet<T>,
    image: &Tensor<T>,
    cam: &CameraIntrinsics,
    total: usize,
    seed: u64,
    item: u64,
) -> Result<Tensor<T>> {
    let per = model.config.output_points();
    if total == 0 || !total.is_multiple_of(per) {
        let lo = (total / per).max(1) * per;
        let hi = (total / per + 1) * per;
        return Err(config_err!(
            "{total} points is not a multiple of the model's {per}-point output; try {lo} or {hi}"
        ));
    }
    let chunks = (0..total / per)
        .map(|k| {
            let cloud = inference_cloud(model, cam, seed, item, k as u64);
            model.predict(image, &cloud, cam)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::vstack(&chunks)
}

/// Per-category CD and IoU of `predict(sample, index)` against each
/// sample's ground truth.
pub fn evaluate_with(
    samples: &[&Sample],
    backend: NNBackend,
    mut predict: impl FnMut(&Sample, usize) -> Result<Tensor<f32>>,
) -> Result<MetricsReport> {
    let mut rows = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let pred = predict(s, i)?;
        let cd = chamfer_distance(pred.data(), s.cloud.data(), backend)?;
        let iou = iou_voxel(pred.data(), s.cloud.data(), DEFAULT_RESOLUTION)?;
        rows.push((s.category.name(), cd, iou));
    }
    Ok(MetricsReport::from_samples(rows))
}

/// Evaluates `model` with `chunks` initial clouds per image.
pub fn evaluate(
    model: &PcdNet<f32>,
    samples: &[&Sample],
    backend: NNBackend,
    seed: u64,
    chunks: usize,
) -> Result<MetricsReport> {
    let total = chunks * model.config.output_points();
    evaluate_with(samples, backend, |s, i| {
        generate_dense(model, &s.image, &s.cam, total, seed, i as u64)
    })
}
