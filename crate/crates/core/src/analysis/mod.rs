//! Introspection experiments on trained models.

mod ablation;
mod count;
mod interpolate;
mod mixing;

pub use ablation::{ablation_run, AblationReport, AblationRow, ABLATION_FEATURES};
pub use count::{conv_counts, count_params_macs, graphx_counts, linear_counts, CountReport, LayerCount};
pub use interpolate::{bilinear_weights, interpolate_latents, mix_codes, LatentCode};
pub use mixing::{inspect_mixing, numerical_rank, MixingReport, RANK_TOLERANCE};
