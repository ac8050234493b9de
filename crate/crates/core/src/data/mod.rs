//! Synthetic single-view dataset: primitive shapes, their silhouettes and
//! surface point clouds.

mod dataset;
mod render;
mod shapes;

pub use dataset::{make_dataset, Dataset, DatasetConfig, Sample, Split, INDEX_FILE};
pub use render::{render_scene, render_silhouette};
pub use shapes::{box_face_areas, random_spec, Category, Primitive, ShapeSpec};
