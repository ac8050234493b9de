//! Losses and evaluation metrics: Chamfer distance, voxel IoU, L2 weight
//! penalty, and the per-category metrics report.

mod chamfer;
mod iou;
pub mod nn;
mod report;

pub use chamfer::{chamfer, chamfer_distance};
pub use iou::{iou_voxel, VoxelFrame, BOX_MARGIN, DEFAULT_RESOLUTION};
pub use nn::NNBackend;
pub use report::{MetricsReport, MetricsRow};

use crate::error::Result;
use crate::tensor::{Element, Graph, Var};

pub const DEFAULT_L2: f64 = 1e-5;

/// `lambda * sum ||theta||^2` over `params`, as a graph scalar.
pub fn l2_penalty<T: Element>(g: &mut Graph<T>, params: &[Var], lambda: f64) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &p in params {
        let sq = g.mul(p, p)?;
        let s = g.sum(sq);
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    let total = match total {
        Some(t) => t,
        None => g.constant(crate::tensor::Tensor::scalar(T::zero())),
    };
    Ok(g.scale(total, T::from_f64_lossy(lambda)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn l2_single_weight() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::scalar(3.0), true);
        let l = l2_penalty(&mut g, &[w], 1e-5).unwrap();
        assert!((g.value(l).item() - 9e-5).abs() < 1e-18);
        g.backward(l).unwrap();
        assert!((g.grad(w).unwrap().item() - 6e-5).abs() < 1e-18);
    }

    #[test]
    fn l2_of_nothing_is_zero() {
        let mut g = Graph::<f32>::new();
        let l = l2_penalty(&mut g, &[], 1e-5).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
    }
}
