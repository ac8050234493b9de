//! Bilinear interpolation between four latent codes.

use crate::blend::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::pipeline::{ModelConfig, PcdNet};
use crate::tensor::{Element, Tensor};

/// Blended features of one image for a given initial cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode<T: Element> {
    pub features: Tensor<T>,
    pub cloud: Tensor<T>,
    pub config: ModelConfig,
}

impl<T: Element> LatentCode<T> {
    pub fn encode(model: &PcdNet<T>, image: &Tensor<T>, cloud: &Tensor<T>, cam: &CameraIntrinsics) -> Result<Self> {
        Ok(Self {
            features: model.latent_value(image, cloud, cam)?,
            cloud: cloud.clone(),
            config: model.config.clone(),
        })
    }
}

/// Weights of corners `[top-left, top-right, bottom-left, bottom-right]`
/// at horizontal fraction `a` and vertical fraction `b`.
pub fn bilinear_weights(a: f64, b: f64) -> [f64; 4] {
    [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b]
}

/// Convex combination of the four codes; zero-weight corners are skipped
/// so corner points reproduce their code exactly.
pub fn mix_codes<T: Element>(codes: &[LatentCode<T>; 4], weights: [f64; 4]) -> Result<Tensor<T>> {
    check_compatible(codes)?;
    let mut out = Tensor::zeros(codes[0].features.shape().to_vec());
    let mut first = true;
    for (code, &w) in codes.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let w = T::from_f64_lossy(w);
        for (o, &x) in out.data_mut().iter_mut().zip(code.features.data()) {
            *o = if first { w * x } else { *o + w * x };
        }
        first = false;
    }
    Ok(out)
}

fn check_compatible<T: Element>(codes: &[LatentCode<T>; 4]) -> Result<()> {
    let c0 = &codes[0];
    for (i, c) in codes.iter().enumerate().skip(1) {
        if c.cloud != c0.cloud {
            return Err(Error::Contract(format!(
                "latent code {i} was produced from a different initial cloud than code 0"
            )));
        }
        if c.config != c0.config || c.features.shape() != c0.features.shape() {
            return Err(Error::Contract(format!(
                "latent code {i} was produced by a different model configuration than code 0"
            )));
        }
    }
    Ok(())
}

/// Decodes a `grid x grid` lattice of codes; entry `i * grid + j` has
/// horizontal fraction `j / (grid - 1)` and vertical fraction `i / (grid - 1)`.
pub fn interpolate_latents<T: Element>(
    model: &PcdNet<T>,
    codes: &[LatentCode<T>; 4],
    grid: usize,
) -> Result<Vec<Tensor<T>>> {
    if grid < 2 {
        return Err(Error::Contract(format!(
            "interpolation grid must be at least 2, got {grid}"
        )));
    }
    if codes[0].config != model.config {
        return Err(Error::Contract(
            "latent codes come from a different model configuration".into(),
        ));
    }
    let step = 1.0 / (grid - 1) as f64;
    let mut out = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let z = mix_codes(codes, bilinear_weights(j as f64 * step, i as f64 * step))?;
            out.push(model.decode_value(&z)?);
        }
    }
    Ok(out)
}
