//! Browser bindings: render a primitive, compare two clouds, train a tiny model.

use pcdnet::blend::CameraIntrinsics;
use pcdnet::data::{make_dataset, random_spec, render_silhouette, Category, DatasetConfig, Sample, Split};
use pcdnet::metrics::{chamfer_distance, NNBackend};
use pcdnet::pipeline::{inference_cloud, ModelConfig, PcdNet, TrainConfig, Trainer, Variant};
use pcdnet::rng::{stream, Purpose};
use wasm_bindgen::prelude::*;

fn js_err(e: pcdnet::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// A random primitive with its silhouette and surface samples.
#[wasm_bindgen]
pub struct Shape {
    size: usize,
    silhouette: Vec<f32>,
    cloud: Vec<f32>,
}

#[wasm_bindgen]
impl Shape {
    /// `category` is one of sphere, box, cylinder, capsule, torus.
    #[wasm_bindgen(constructor)]
    pub fn new(category: &str, seed: u64, size: usize, points: usize) -> Result<Shape, JsError> {
        let category: Category = category.parse().map_err(js_err)?;
        let spec = random_spec(category, &mut stream(seed, Purpose::Shape, 0));
        let cam = CameraIntrinsics::for_image(size, size);
        let silhouette = render_silhouette::<f32>(&spec, &cam, size, size).map_err(js_err)?;
        let cloud = spec.sample_surface::<f32>(points, &mut stream(seed, Purpose::Shape, 1));
        Ok(Shape {
            size,
            silhouette: silhouette.data().to_vec(),
            cloud: cloud.data().to_vec(),
        })
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major `size * size` coverage in `[0, 1]`.
    pub fn silhouette(&self) -> Vec<f32> {
        self.silhouette.clone()
    }

    /// Flat `xyz` triples in the camera frame.
    pub fn cloud(&self) -> Vec<f32> {
        self.cloud.clone()
    }
}

/// Chamfer distance between two flat `xyz` clouds.
#[wasm_bindgen]
pub fn chamfer(a: &[f32], b: &[f32], use_grid: bool) -> Result<f64, JsError> {
    let backend = if use_grid {
        NNBackend::UniformGrid
    } else {
        NNBackend::BruteForce
    };
    chamfer_distance(a, b, backend).map_err(js_err)
}

/// A small up-resolving model trained on a toy dataset, one step at a time.
#[wasm_bindgen]
pub struct Session {
    trainer: Trainer,
    train: Vec<Sample>,
    test: Vec<Sample>,
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Session, JsError> {
        let data = make_dataset(
            &DatasetConfig {
                per_category: 8,
                image_size: 32,
                points: 256,
                ..DatasetConfig::default()
            },
            seed,
        )
        .map_err(js_err)?;
        let config = ModelConfig {
            variant: Variant::UpResGraphX,
            image_size: 32,
            channels: vec![8, 16],
            widths: vec![32, 24],
            expansion: vec![1, 2],
            points: 128,
            ..ModelConfig::default()
        };
        let model = PcdNet::new(&config, &mut stream(seed, Purpose::Init, 0)).map_err(js_err)?;
        let train_cfg = TrainConfig {
            lr: 2e-3,
            epochs: 1000,
            ..TrainConfig::default()
        };
        let trainer = Trainer::new(model, train_cfg, seed).map_err(js_err)?;
        Ok(Session {
            trainer,
            train: data.split(Split::Train).cloned().collect(),
            test: data.split(Split::Test).cloned().collect(),
        })
    }

    /// Runs `n` optimiser steps and returns the last total loss.
    pub fn step(&mut self, n: u32) -> Result<f32, JsError> {
        let refs: Vec<&Sample> = self.train.iter().collect();
        let mut loss = f32::NAN;
        for _ in 0..n {
            loss = self.trainer.step(&refs).map_err(js_err)?.total;
        }
        Ok(loss)
    }

    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> u64 {
        self.trainer.step
    }

    #[wasm_bindgen(getter)]
    pub fn test_count(&self) -> usize {
        self.test.len()
    }

    pub fn test_image(&self, index: usize) -> Vec<f32> {
        self.test[index % self.test.len()].image.data().to_vec()
    }

    pub fn test_cloud(&self, index: usize) -> Vec<f32> {
        self.test[index % self.test.len()].cloud.data().to_vec()
    }

    /// Predicted cloud for a held-out sample.
    pub fn predict(&self, index: usize) -> Result<Vec<f32>, JsError> {
        let s = &self.test[index % self.test.len()];
        let model = &self.trainer.model;
        let cloud = inference_cloud(model, &s.cam, 0, index as u64, 0);
        Ok(model.predict(&s.image, &cloud, &s.cam).map_err(js_err)?.data().to_vec())
    }
}
