//! Experiment configuration, PLY export and the subcommands behind the binary.

pub mod commands;
pub mod config;
pub mod ply;

pub use commands::{Context, InferArgs, Overrides, TrainArgs};
pub use config::{ExperimentConfig, IoConfig};
pub use ply::{export_ply, format_g, parse_ply, read_ply};
