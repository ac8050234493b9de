//! Dataset generation and the on-disk dataset directory.
//!
//! Layout:
//!
//! ```text
//! <dir>/index.json          config, seed and one entry per sample
//! <dir>/images/<id>.pcdt    [1, H, W] f32 silhouette
//! <dir>/clouds/<id>.pcdt    [M, 3] f32 surface points
//! ```

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::render::render_silhouette;
use super::shapes::{random_spec, Category, ShapeSpec};
use crate::blend::CameraIntrinsics;
use crate::error::{config_err, Error, Result};
use crate::rng::{stream, Purpose};
use crate::tensor::{io, kernels, Tensor};

pub const INDEX_FILE: &str = "index.json";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub categories: Vec<Category>,
    pub per_category: usize,
    /// Fraction of each category assigned to the training split.
    pub split_ratio: f64,
    pub image_size: usize,
    /// Ground-truth points per sample.
    pub points: usize,
    /// Defaults to [`CameraIntrinsics::for_image`].
    pub camera: Option<CameraIntrinsics>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            categories: Category::ALL.to_vec(),
            per_category: 100,
            split_ratio: 0.8,
            image_size: 64,
            points: 1024,
            camera: None,
        }
    }
}

impl DatasetConfig {
    pub fn camera(&self) -> CameraIntrinsics {
        self.camera
            .unwrap_or_else(|| CameraIntrinsics::for_image(self.image_size, self.image_size))
    }

    pub fn train_count(&self) -> usize {
        ((self.per_category as f64 * self.split_ratio).round() as usize).clamp(1, self.per_category - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(config_err!("data.categories is empty"));
        }
        if self.per_category < 2 {
            return Err(config_err!(
                "data.per_category must be at least 2 to fill both splits, got {}",
                self.per_category
            ));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(config_err!(
                "data.split_ratio must lie in (0, 1), got {}",
                self.split_ratio
            ));
        }
        if self.image_size == 0 || self.points == 0 {
            return Err(config_err!("data.image_size and data.points must be positive"));
        }
        self.camera().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub category: Category,
    pub split: Split,
    pub spec: ShapeSpec,
    pub cam: CameraIntrinsics,
    /// `[1, H, W]` in `[0, 1]`.
    pub image: Tensor<f32>,
    /// `[M, 3]`, camera frame.
    pub cloud: Tensor<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    version: u32,
    seed: u64,
    config: DatasetConfig,
    samples: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    id: String,
    category: Category,
    split: Split,
    camera: CameraIntrinsics,
    spec: ShapeSpec,
    image: String,
    cloud: String,
}

/// Deterministic dataset for `seed`. Each sample draws from its own stream,
/// so the result does not depend on generation order.
pub fn make_dataset(config: &DatasetConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let cam = config.camera();
    let size = config.image_size;
    let n = config.per_category;
    let mut jobs = Vec::new();
    for (ci, &cat) in config.categories.iter().enumerate() {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, Purpose::Split, ci as u64));
        let mut split = vec![Split::Test; n];
        for &i in &order[..config.train_count()] {
            split[i] = Split::Train;
        }
        for (i, s) in split.into_iter().enumerate() {
            jobs.push((ci, cat, i, s));
        }
    }
    let samples = kernels::par_map(jobs, |(ci, cat, i, split)| -> Result<Sample> {
        let mut rng = stream(seed, Purpose::Shape, ((ci as u64) << 32) | i as u64);
        let spec = random_spec(cat, &mut rng);
        Ok(Sample {
            id: format!("{}-{:04}", cat.name(), i),
            category: cat,
            split,
            spec,
            cam,
            image: render_silhouette(&spec, &cam, size, size)?,
            cloud: spec.sample_surface(config.points, &mut rng),
        })
    });
    Ok(Dataset {
        config: config.clone(),
        seed,
        samples: samples.into_iter().collect::<Result<_>>()?,
    })
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("images"))?;
        fs::create_dir_all(dir.join("clouds"))?;
        let mut entries = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let image = format!("images/{}.pcdt", s.id);
            let cloud = format!("clouds/{}.pcdt", s.id);
            io::save(&dir.join(&image), &s.image)?;
            io::save(&dir.join(&cloud), &s.cloud)?;
            entries.push(IndexEntry {
                id: s.id.clone(),
                category: s.category,
                split: s.split,
                camera: s.cam,
                spec: s.spec,
                image,
                cloud,
            });
        }
        let index = Index {
            version: INDEX_VERSION,
            seed: self.seed,
            config: self.config.clone(),
            samples: entries,
        };
        let json = serde_json::to_string_pretty(&index).map_err(|e| Error::Serialization(e.to_string()))?;
        io::write_atomic(&dir.join(INDEX_FILE), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let index: Index =
            serde_json::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        if index.version != INDEX_VERSION {
            return Err(Error::Serialization(format!(
                "dataset index version {} is not supported",
                index.version
            )));
        }
        let size = index.config.image_size;
        let samples = index
            .samples
            .into_iter()
            .map(|e| {
                let image: Tensor<f32> = io::load(&dir.join(&e.image))?;
                let cloud: Tensor<f32> = io::load(&dir.join(&e.cloud))?;
                if image.shape() != [1, size, size] || cloud.rank() != 2 || cloud.shape()[1] != 3 {
                    return Err(Error::Serialization(format!(
                        "sample {} has image {:?} and cloud {:?}",
                        e.id,
                        image.shape(),
                        cloud.shape()
                    )));
                }
                Ok(Sample {
                    id: e.id,
                    category: e.category,
                    split: e.split,
                    spec: e.spec,
                    cam: e.camera,
                    image,
                    cloud,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: index.config,
            seed: index.seed,
            samples,
        })
    }
}
