//! Single-image point cloud reconstruction by deforming a random point set.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense tensors with a reverse-mode differentiation tape.
//! * [`layers`]: GraphX mixing layers, fully connected blocks and encoders.
//! * [`blend`]: projection features, 2D-to-3D AdaIN and feature concatenation.
//! * [`metrics`]: Chamfer distance, voxel IoU and the L2 penalty.
//! * [`data`]: procedural shapes, silhouettes and dataset directories.
//! * [`pipeline`]: the full model, training, checkpoints and dense generation.
//! * [`analysis`]: latent interpolation, mixing inspection, Mac counting, ablations.
//! * [`cli`]: experiment configuration, PLY export and the command-line surface.

pub mod analysis;
pub mod blend;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Element, Graph, Tensor, Var};
