//! Per-point feature construction.
//!
//! Every point of the (camera-frame) cloud receives, for each encoder
//! scale, a global feature from the 2D-to-3D AdaIN of its MLP feature and a
//! local feature bilinearly sampled at its projection. The blocks are
//! concatenated in a fixed order:
//!
//! ```text
//! [adain_1 .. adain_S | proj_1 .. proj_S | x y z]
//! ```
//!
//! so the width is `2 * sum(c_i) + 3` for the full feature set.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, dim_err, domain_err, Result};
use crate::layers::EncoderConfig;
use crate::tensor::{Element, Graph, Var};

/// Pinhole intrinsics in pixels plus the valid depth range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
}

impl CameraIntrinsics {
    /// Camera used by the synthetic data: focal length equal to the image
    /// size, centred principal point, depths in `[1, 3]`.
    pub fn for_image(h: usize, w: usize) -> Self {
        Self {
            fx: w as f64,
            fy: h as f64,
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            near: 1.0,
            far: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.near, self.far]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.near <= 0.0 || self.near >= self.far {
            return Err(config_err!(
                "invalid camera: need fx, fy > 0 and 0 < near < far, got {:?}",
                self
            ));
        }
        Ok(())
    }

    /// Pixel coordinates of a camera-frame point.
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)
    }

    pub fn unproject(&self, u: f64, v: f64, z: f64) -> [f64; 3] {
        [(u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z]
    }
}

/// Which feature blocks enter the blended feature. Coordinates are always kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    #[default]
    Full,
    ProjectionOnly,
    AdainOnly,
}

impl FeatureSet {
    pub fn width(self, cfg: &EncoderConfig) -> usize {
        let c = cfg.channel_sum();
        match self {
            FeatureSet::Full => 2 * c + 3,
            FeatureSet::ProjectionOnly | FeatureSet::AdainOnly => c + 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FeatureSet::Full => "full",
            FeatureSet::ProjectionOnly => "projection",
            FeatureSet::AdainOnly => "adain",
        }
    }
}

/// Projects `cloud: [N, 3]` to continuous coordinates on a `map_h x map_w`
/// grid for an `image_h x image_w` image.
pub fn project_points<T: Element>(
    g: &mut Graph<T>,
    cloud: Var,
    cam: &CameraIntrinsics,
    map_shape: (usize, usize),
    image_shape: (usize, usize),
) -> Result<Var> {
    let s = g.shape(cloud);
    if s.len() != 2 || s[1] != 3 {
        return Err(dim_err!("project_points expects [N, 3], got {:?}", s));
    }
    let near = T::from_f64_lossy(cam.near);
    if let Some((i, z)) = g
        .value(cloud)
        .data()
        .chunks(3)
        .map(|p| p[2])
        .enumerate()
        .find(|(_, z)| z.is_nan() || *z < near)
    {
        return Err(domain_err!(
            "point {} has depth {} in front of the near plane {}",
            i,
            z,
            cam.near
        ));
    }
    let sx = map_shape.1 as f64 / image_shape.1 as f64;
    let sy = map_shape.0 as f64 / image_shape.0 as f64;
    let x = g.narrow(cloud, 1, 0, 1)?;
    let y = g.narrow(cloud, 1, 1, 1)?;
    let z = g.narrow(cloud, 1, 2, 1)?;
    let xz = g.div(x, z)?;
    let yz = g.div(y, z)?;
    let u = g.scale(xz, T::from_f64_lossy(cam.fx * sx));
    let u = g.add_scalar(u, T::from_f64_lossy(cam.cx * sx));
    let v = g.scale(yz, T::from_f64_lossy(cam.fy * sy));
    let v = g.add_scalar(v, T::from_f64_lossy(cam.cy * sy));
    g.concat(&[u, v], 1)
}

/// Samples every feature map at the projection of every point.
pub fn projection_features<T: Element>(
    g: &mut Graph<T>,
    cloud: Var,
    cam: &CameraIntrinsics,
    maps: &[Var],
    image_shape: (usize, usize),
) -> Result<Vec<Var>> {
    maps.iter()
        .map(|&m| {
            let s = g.shape(m).to_vec();
            if s.len() != 3 {
                return Err(dim_err!("feature map must be [c, h, w], got {:?}", s));
            }
            let uv = project_points(g, cloud, cam, (s[1], s[2]), image_shape)?;
            g.bilinear_sample(m, uv)
        })
        .collect()
}

/// `sigma_X * (y - mu_Y) / sigma_Y + mu_X` per channel, with image statistics
/// over spatial locations of `map: [c, h, w]` and point statistics over the
/// rows of `points: [N, c]`.
pub fn adain_2d_to_3d<T: Element>(g: &mut Graph<T>, map: Var, points: Var) -> Result<Var> {
    let (sm, sp) = (g.shape(map).to_vec(), g.shape(points).to_vec());
    if sm.len() != 3 || sp.len() != 2 || sm[0] != sp[1] {
        return Err(dim_err!(
            "AdaIN needs map [c, h, w] and points [N, c], got {:?} and {:?}",
            sm,
            sp
        ));
    }
    if sp[0] == 0 {
        return Err(domain_err!("AdaIN over an empty point set"));
    }
    let (mu_x, sigma_x) = g.reduce_stats(map, &[1, 2])?;
    let (mu_y, sigma_y) = g.reduce_stats(points, &[0])?;
    let centered = g.sub(points, mu_y)?;
    let normalized = g.div(centered, sigma_y)?;
    let scaled = g.mul(normalized, sigma_x)?;
    g.add(scaled, mu_x)
}

/// Concatenated per-point features `[N, D]`.
#[allow(clippy::too_many_arguments)]
pub fn blend<T: Element>(
    g: &mut Graph<T>,
    cloud: Var,
    cam: &CameraIntrinsics,
    maps: &[Var],
    point_features: &[Var],
    image_shape: (usize, usize),
    features: FeatureSet,
) -> Result<Var> {
    if maps.len() != point_features.len() {
        return Err(dim_err!(
            "{} feature maps but {} point feature scales",
            maps.len(),
            point_features.len()
        ));
    }
    let mut blocks = Vec::with_capacity(2 * maps.len() + 1);
    if features != FeatureSet::ProjectionOnly {
        for (&m, &y) in maps.iter().zip(point_features) {
            blocks.push(adain_2d_to_3d(g, m, y)?);
        }
    }
    if features != FeatureSet::AdainOnly {
        blocks.extend(projection_features(g, cloud, cam, maps, image_shape)?);
    }
    blocks.push(cloud);
    g.concat(&blocks, 1)
}
