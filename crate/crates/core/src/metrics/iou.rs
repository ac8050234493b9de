//! Voxel IoU for evaluation.

use crate::error::{domain_err, Result};
use crate::tensor::Element;

pub const DEFAULT_RESOLUTION: usize = 32;
/// Fraction of the union extent added to the bounding box (half per side).
pub const BOX_MARGIN: f64 = 0.02;

/// Axis-aligned voxelisation frame shared by both clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelFrame {
    pub lo: [f64; 3],
    pub size: [f64; 3],
    pub resolution: usize,
}

impl VoxelFrame {
    /// Union bounding box of the flat `[n, 3]` buffers, expanded by [`BOX_MARGIN`].
    pub fn enclosing<T: Element>(clouds: &[&[T]], resolution: usize) -> Result<Self> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in clouds.iter().flat_map(|c| c.chunks_exact(3)) {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a].as_f64());
                hi[a] = hi[a].max(p[a].as_f64());
            }
        }
        if resolution == 0 {
            return Err(domain_err!("voxel resolution must be positive"));
        }
        let mut size = [0.0; 3];
        for a in 0..3 {
            let extent = hi[a] - lo[a];
            if !extent.is_finite() || extent <= 0.0 {
                return Err(domain_err!(
                    "bounding box has zero or undefined extent {extent} along axis {a}"
                ));
            }
            lo[a] -= extent * BOX_MARGIN / 2.0;
            size[a] = extent * (1.0 + BOX_MARGIN);
        }
        Ok(Self { lo, size, resolution })
    }

    /// Cell coordinates of a point; points on the max face go to the last cell.
    pub fn cell(&self, p: &[f64; 3]) -> [usize; 3] {
        let r = self.resolution;
        [0, 1, 2].map(|a| {
            let f = ((p[a] - self.lo[a]) / self.size[a] * r as f64).floor();
            if f <= 0.0 {
                0
            } else {
                (f as usize).min(r - 1)
            }
        })
    }

    /// Occupancy bitmap of length `resolution^3`.
    pub fn occupancy<T: Element>(&self, cloud: &[T]) -> Vec<bool> {
        let r = self.resolution;
        let mut occ = vec![false; r * r * r];
        for p in cloud.chunks_exact(3) {
            let c = self.cell(&[p[0].as_f64(), p[1].as_f64(), p[2].as_f64()]);
            occ[(c[0] * r + c[1]) * r + c[2]] = true;
        }
        occ
    }
}

/// `|A ∩ B| / |A ∪ B|` of the occupancy grids of two nonempty clouds.
pub fn iou_voxel<T: Element>(x: &[T], y: &[T], resolution: usize) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(domain_err!("IoU of an empty point set"));
    }
    let frame = VoxelFrame::enclosing(&[x, y], resolution)?;
    let (a, b) = (frame.occupancy(x), frame.occupancy(y));
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.iter().zip(&b) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(inter as f64 / union as f64)
}
