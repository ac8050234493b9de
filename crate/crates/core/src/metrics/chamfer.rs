//! Symmetric Chamfer distance with a fixed-pairing backward rule.

use super::nn::{nearest, NNBackend};
use crate::error::{dim_err, domain_err, Result};
use crate::tensor::{CustomBackward, Element, Graph, Tensor, Var};

/// `(1/N) sum_x min_y |x - y|^2 + (1/M) sum_y min_x |y - x|^2` for
/// `x: [N, 3]`, `y: [M, 3]`.
pub fn chamfer<T: Element>(g: &mut Graph<T>, x: Var, y: Var, backend: NNBackend) -> Result<Var> {
    let (vx, vy) = (g.value(x), g.value(y));
    for (name, t) in [("first", vx), ("second", vy)] {
        if t.rank() != 2 || t.shape()[1] != 3 {
            return Err(dim_err!("chamfer expects [n, 3] point sets, {name} is {:?}", t.shape()));
        }
        if t.shape()[0] == 0 {
            return Err(domain_err!("chamfer distance of an empty {name} point set"));
        }
    }
    let (value, pairing) = chamfer_value(vx.data(), vy.data(), backend);
    Ok(g.custom(&[x, y], Tensor::scalar(value), Box::new(pairing)))
}

/// Value-only Chamfer distance on flat `[n, 3]` buffers.
pub fn chamfer_distance<T: Element>(x: &[T], y: &[T], backend: NNBackend) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(domain_err!("chamfer distance of an empty point set"));
    }
    Ok(chamfer_value(x, y, backend).0.as_f64())
}

fn chamfer_value<T: Element>(x: &[T], y: &[T], backend: NNBackend) -> (T, Pairing) {
    let xy = nearest(x, y, backend);
    let yx = nearest(y, x, backend);
    // Summing in sorted order makes the value independent of point order.
    let mean = |d: &[(usize, T)]| {
        let mut v: Vec<T> = d.iter().map(|&(_, v)| v).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let s = v.into_iter().fold(T::zero(), |acc, v| acc + v);
        s / T::from_usize(d.len()).unwrap()
    };
    let value = mean(&xy) + mean(&yx);
    let pairing = Pairing {
        x_to_y: xy.into_iter().map(|(j, _)| j).collect(),
        y_to_x: yx.into_iter().map(|(i, _)| i).collect(),
    };
    (value, pairing)
}

/// Nearest-neighbour assignment recorded at forward time.
struct Pairing {
    x_to_y: Vec<usize>,
    y_to_x: Vec<usize>,
}

impl<T: Element> CustomBackward<T> for Pairing {
    fn name(&self) -> &'static str {
        "chamfer"
    }

    fn backward(&self, grad_out: &Tensor<T>, inputs: &[&Tensor<T>]) -> Vec<Option<Tensor<T>>> {
        let (x, y) = (inputs[0], inputs[1]);
        let mut gx = vec![T::zero(); x.numel()];
        let mut gy = vec![T::zero(); y.numel()];
        let two = T::from_f64_lossy(2.0) * grad_out.item();
        let cn = two / T::from_usize(self.x_to_y.len()).unwrap();
        let cm = two / T::from_usize(self.y_to_x.len()).unwrap();
        for (i, &j) in self.x_to_y.iter().enumerate() {
            for a in 0..3 {
                let d = cn * (x.data()[3 * i + a] - y.data()[3 * j + a]);
                gx[3 * i + a] = gx[3 * i + a] + d;
                gy[3 * j + a] = gy[3 * j + a] - d;
            }
        }
        for (j, &i) in self.y_to_x.iter().enumerate() {
            for a in 0..3 {
                let d = cm * (y.data()[3 * j + a] - x.data()[3 * i + a]);
                gy[3 * j + a] = gy[3 * j + a] + d;
                gx[3 * i + a] = gx[3 * i + a] - d;
            }
        }
        vec![
            Some(Tensor::new(x.shape().to_vec(), gx).unwrap()),
            Some(Tensor::new(y.shape().to_vec(), gy).unwrap()),
        ]
    }
}
