//! End-to-end model, training, checkpoints and inference.

mod checkpoint;
mod infer;
mod model;
mod train;

pub use checkpoint::{Checkpoint, Counters, RngKind, RngState, CHECKPOINT_VERSION};
pub use infer::{cloud_stream_index, evaluate, evaluate_with, generate_dense, inference_cloud};
pub use model::{init_point_cloud, ModelConfig, PcdNet, Stage, Variant};
pub use train::{Adam, StepRecord, TrainConfig, Trainer, LOSS_CSV_HEADER};
