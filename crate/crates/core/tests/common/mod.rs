//! Independent reference implementations. Everything here is written with
//! plain loops over `f64` and shares no code with the library kernels.
#![allow(dead_code)]

use pcdnet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn rand_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rand_vec(n, lo, hi, rng)).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `[m, k] x [k, n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}

fn ravel_broadcast(idx: &[usize], shape: &[usize]) -> usize {
    // `shape` is right-aligned against `idx`; size-1 axes repeat.
    let off = idx.len() - shape.len();
    let mut flat = 0;
    for (a, &d) in shape.iter().enumerate() {
        let i = if d == 1 { 0 } else { idx[off + a] };
        flat = flat * d + i;
    }
    flat
}

/// Element-wise `f(a, b)` under trailing-axis broadcasting.
pub fn broadcast_binary(
    a: &[f64],
    sa: &[usize],
    b: &[f64],
    sb: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> (Vec<usize>, Vec<f64>) {
    let rank = sa.len().max(sb.len());
    let dim = |s: &[usize], a: usize| {
        let off = rank - s.len();
        if a < off {
            1
        } else {
            s[a - off]
        }
    };
    let shape: Vec<usize> = (0..rank).map(|a| dim(sa, a).max(dim(sb, a))).collect();
    let n = shape.iter().product();
    let out = (0..n)
        .map(|flat| {
            let idx = unravel(flat, &shape);
            f(a[ravel_broadcast(&idx, sa)], b[ravel_broadcast(&idx, sb)])
        })
        .collect();
    (shape, out)
}

/// Two-pass mean and `sqrt(var + eps)` over `axes`; the reduced axes are kept as size 1.
pub fn stats(x: &[f64], shape: &[usize], axes: &[usize], eps: f64) -> (Vec<f64>, Vec<f64>) {
    let out_shape: Vec<usize> = shape
        .iter()
        .enumerate()
        .map(|(a, &d)| if axes.contains(&a) { 1 } else { d })
        .collect();
    let m: usize = out_shape.iter().product();
    let count = (x.len() / m.max(1)) as f64;
    let mut sum = vec![0.0; m];
    for (flat, &v) in x.iter().enumerate() {
        sum[ravel_broadcast(&unravel(flat, shape), &out_shape)] += v;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let mut sq = vec![0.0; m];
    for (flat, &v) in x.iter().enumerate() {
        let o = ravel_broadcast(&unravel(flat, shape), &out_shape);
        sq[o] += (v - mean[o]).powi(2);
    }
    let std = sq.iter().map(|s| (s / count + eps).sqrt()).collect();
    (mean, std)
}

/// Zero-padded cross-correlation of `x: [ci, h, w]` with `k: [co, ci, kh, kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    (ci, h, w): (usize, usize, usize),
    k: &[f64],
    (co, kh, kw): (usize, usize, usize),
    stride: usize,
    pad: usize,
) -> (usize, usize, Vec<f64>) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        for y in 0..oh {
            for xo in 0..ow {
                let mut s = 0.0;
                for c in 0..ci {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = (y * stride + dy) as isize - pad as isize;
                            let ix = (xo * stride + dx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            s += x[(c * h + iy as usize) * w + ix as usize] * k[((o * ci + c) * kh + dy) * kw + dx];
                        }
                    }
                }
                out[(o * oh + y) * ow + xo] = s;
            }
        }
    }
    (oh, ow, out)
}

/// Value of channel `c` of `map: [C, h, w]` at pixel coordinates `(u, v)`,
/// clamped to the border.
pub fn bilinear(map: &[f64], h: usize, w: usize, c: usize, u: f64, v: f64) -> f64 {
    let at = |x: usize, y: usize| map[(c * h + y) * w + x];
    let u = u.clamp(0.0, (w - 1) as f64);
    let v = v.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    at(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + at(x1, y0) * fx * (1.0 - fy)
        + at(x0, y1) * (1.0 - fx) * fy
        + at(x1, y1) * fx * fy
}

/// One GraphX layer written out point by point:
/// `out_k = h(W^T (sum_i w_ik f_i + b_k) + b)`.
pub struct GraphXOracle<'a> {
    pub mix: &'a [f64],
    pub mix_bias: &'a [f64],
    pub weight: &'a [f64],
    pub bias: &'a [f64],
    pub relu: bool,
    pub n_in: usize,
    pub n_out: usize,
    pub d_in: usize,
    pub d_out: usize,
}

impl GraphXOracle<'_> {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_out * self.d_out);
        for k in 0..self.n_out {
            let mut n_k = vec![self.mix_bias[k]; self.d_in];
            for i in 0..self.n_in {
                let w_ik = self.mix[k * self.n_in + i];
                for (c, slot) in n_k.iter_mut().enumerate() {
                    *slot += w_ik * x[i * self.d_in + c];
                }
            }
            for o in 0..self.d_out {
                let mut y = self.bias[o];
                for (c, n) in n_k.iter().enumerate() {
                    y += self.weight[c * self.d_out + o] * n;
                }
                out.push(if self.relu { y.max(0.0) } else { y });
            }
        }
        out
    }
}

/// Mean squared nearest distance both ways, by exhaustive search.
pub fn chamfer(x: &[f64], y: &[f64]) -> f64 {
    let one_way = |a: &[f64], b: &[f64]| {
        let mut total = 0.0;
        for p in a.chunks(3) {
            let mut best = f64::INFINITY;
            for q in b.chunks(3) {
                let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                best = best.min(d);
            }
            total += best;
        }
        total / (a.len() / 3) as f64
    };
    one_way(x, y) + one_way(y, x)
}

/// Voxel IoU via hash sets of cell coordinates in the union box padded by
/// 1% of its extent on each side.
pub fn iou(x: &[f64], y: &[f64], res: usize) -> f64 {
    use std::collections::HashSet;
    let all: Vec<&[f64]> = x.chunks(3).chain(y.chunks(3)).collect();
    let mut lo = [0.0; 3];
    let mut size = [0.0; 3];
    for a in 0..3 {
        let mn = all.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
        let mx = all.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
        lo[a] = mn - 0.01 * (mx - mn);
        size[a] = 1.02 * (mx - mn);
    }
    let cells = |c: &[f64]| -> HashSet<[i64; 3]> {
        c.chunks(3)
            .map(|p| {
                [0, 1, 2].map(|a| {
                    let f = ((p[a] - lo[a]) / size[a] * res as f64).floor() as i64;
                    f.clamp(0, res as i64 - 1)
                })
            })
            .collect()
    };
    let (a, b) = (cells(x), cells(y));
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}

/// Leading singular values by power iteration on `A^T A` with deflation.
pub fn top_singular_values(a: &[f64], rows: usize, cols: usize, count: usize) -> Vec<f64> {
    let mut ata = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            ata[i * cols + j] = (0..rows).map(|r| a[r * cols + i] * a[r * cols + j]).sum();
        }
    }
    let mut out = Vec::new();
    let mut rng = rng(99);
    for _ in 0..count {
        let mut v = rand_vec(cols, -1.0, 1.0, &mut rng);
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let mut w = vec![0.0; cols];
            for i in 0..cols {
                for j in 0..cols {
                    w[i] += ata[i * cols + j] * v[j];
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
            let converged = max_abs_diff(&next, &v) < 1e-14;
            v = next;
            lambda = norm;
            if converged {
                break;
            }
        }
        out.push(lambda.sqrt());
        for i in 0..cols {
            for j in 0..cols {
                ata[i * cols + j] -= lambda * v[i] * v[j];
            }
        }
    }
    out
}
