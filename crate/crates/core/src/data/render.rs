//! Silhouette rendering by per-pixel ray casting with 2x2 supersampling.

use nalgebra::Vector3;

use super::shapes::ShapeSpec;
use crate::blend::CameraIntrinsics;
use crate::error::Result;
use crate::tensor::{Element, Tensor};

const SUBPIXEL: [f64; 2] = [0.25, 0.75];
/// Every point of a pixel is within `0.25 * sqrt(2)` px of a subsample. Growing
/// shapes by slightly more than that makes any pixel containing a projected
/// surface point nonzero.
const PAD_PX: f64 = 0.36;

/// Coverage image `[1, h, w]` of the union of `shapes`; background 0,
/// fully covered pixels 1. Pixel `(i, j)` spans `u in [j, j+1)`,
/// `v in [i, i+1)`. Shapes are grown by [`PAD_PX`] pixels at their far depth.
pub fn render_scene<T: Element>(shapes: &[ShapeSpec], cam: &CameraIntrinsics, h: usize, w: usize) -> Result<Tensor<T>> {
    for s in shapes {
        s.check_in_frustum(cam, h, w)?;
    }
    let origin = Vector3::zeros();
    let pads: Vec<f64> = shapes
        .iter()
        .map(|s| PAD_PX * (s.center[2] + s.primitive.bounding_radius()) / cam.fx.min(cam.fy))
        .collect();
    let mut img = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let mut hits = 0u32;
            for dv in SUBPIXEL {
                for du in SUBPIXEL {
                    let u = j as f64 + du;
                    let v = i as f64 + dv;
                    let dir = Vector3::new((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
                    if shapes.iter().zip(&pads).any(|(s, &pad)| s.hits(origin, dir, pad)) {
                        hits += 1;
                    }
                }
            }
            img.push(T::from_f64_lossy(hits as f64 / 4.0));
        }
    }
    Tensor::new([1, h, w], img)
}

pub fn render_silhouette<T: Element>(
    spec: &ShapeSpec,
    cam: &CameraIntrinsics,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    render_scene(std::slice::from_ref(spec), cam, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shapes::Primitive;
    use nalgebra::Matrix3;

    #[test]
    fn empty_scene_is_black() {
        let cam = CameraIntrinsics::for_image(16, 16);
        let img: Tensor<f32> = render_scene(&[], &cam, 16, 16).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_frustum_is_domain_error() {
        let cam = CameraIntrinsics::for_image(16, 16);
        let s = ShapeSpec::new(Primitive::Sphere { radius: 0.3 }, Matrix3::identity(), [2.0, 0.0, 2.0]);
        let err = render_silhouette::<f32>(&s, &cam, 16, 16).unwrap_err();
        assert_eq!(err.category(), "domain");
    }
}
