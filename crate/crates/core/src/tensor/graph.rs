use std::fmt::Debug;

use super::kernels::{self, bilinear_tap, col2im, im2col, ConvGeometry, MatRef};
use super::{broadcast_index, broadcast_shape, grouped_sums, reduction_map, Element, Tensor};
use crate::error::{dim_err, domain_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for an operation defined outside this module.
///
/// `backward` receives the upstream gradient of the custom node's output and
/// the values of its inputs, and returns one optional gradient per input.
pub trait CustomBackward<T: Element>: Send + Sync {
    fn name(&self) -> &'static str;
    fn backward(&self, grad_out: &Tensor<T>, inputs: &[&Tensor<T>]) -> Vec<Option<Tensor<T>>>;
}

enum Op<T: Element> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Sum(Var),
    Mean {
        x: Var,
        axes: Vec<usize>,
    },
    Std {
        x: Var,
        axes: Vec<usize>,
        mean: Vec<T>,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    BroadcastTo(Var),
    Conv2d {
        x: Var,
        k: Var,
        geom: ConvGeometry,
    },
    Bilinear {
        map: Var,
        coords: Var,
    },
    Custom {
        inputs: Vec<Var>,
        rule: Box<dyn CustomBackward<T>>,
    },
}

struct Node<T: Element> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// list is always a valid topological order.
pub struct Graph<T: Element> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Debug for Graph<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.nodes.len()).finish()
    }
}

/// Std-dev floor inside the square root of [`Graph::reduce_stats`].
pub const STD_EPS: f64 = 1e-5;

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Registers a constant input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Registers a leaf; gradients accumulate into it when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaf_grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(dim_err!("matmul of {:?} and {:?}", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(
            MatRef::new(self.value(a).data(), m, k),
            MatRef::new(self.value(b).data(), k, n),
            T::zero(),
            &mut out,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new([m, n], out)?, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            return Tensor::new(va.shape().to_vec(), data);
        }
        let shape = broadcast_shape(va.shape(), vb.shape())?;
        let ia = broadcast_index(va.shape(), &shape);
        let ib = broadcast_index(vb.shape(), &shape);
        let data = ia
            .iter()
            .zip(&ib)
            .map(|(&i, &j)| f(va.data()[i], vb.data()[j]))
            .collect();
        Tensor::new(shape, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x / y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Div(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let t = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let t = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(t, Op::AddScalar(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.rg(a);
        self.push(t, Op::Relu(a), rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    fn check_axes(&self, x: Var, axes: &[usize]) -> Result<usize> {
        let shape = self.shape(x);
        let mut count = 1;
        for (i, &a) in axes.iter().enumerate() {
            if a >= shape.len() || axes[..i].contains(&a) {
                return Err(dim_err!("invalid reduction axes {:?} for shape {:?}", axes, shape));
            }
            count *= shape[a];
        }
        if count == 0 {
            return Err(domain_err!("empty reduction over axes {:?} of shape {:?}", axes, shape));
        }
        Ok(count)
    }

    fn mean_values(&self, x: Var, axes: &[usize], count: usize) -> (Vec<usize>, Vec<usize>, Vec<T>) {
        let v = self.value(x);
        let (out_shape, map) = reduction_map(v.shape(), axes);
        let n_out: usize = out_shape.iter().product();
        let mut acc = grouped_sums(&map, v.data().iter().copied(), n_out);
        let inv = T::one() / T::from_usize(count).unwrap();
        acc.iter_mut().for_each(|a| *a = *a * inv);
        (out_shape, map, acc)
    }

    /// Mean over `axes`; reduced axes are removed from the shape.
    pub fn mean(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let count = self.check_axes(x, axes)?;
        let (shape, _, mean) = self.mean_values(x, axes, count);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, mean)?, Op::Mean { x, axes: axes.to_vec() }, rg))
    }

    /// Mean and population standard deviation `sqrt(var + STD_EPS)` over `axes`.
    pub fn reduce_stats(&mut self, x: Var, axes: &[usize]) -> Result<(Var, Var)> {
        let count = self.check_axes(x, axes)?;
        let (shape, map, mean) = self.mean_values(x, axes, count);
        let sq = map.iter().zip(self.value(x).data()).map(|(&slot, &val)| {
            let d = val - mean[slot];
            d * d
        });
        let var = grouped_sums(&map, sq, mean.len());
        let inv = T::one() / T::from_usize(count).unwrap();
        let eps = T::from_f64_lossy(STD_EPS);
        let std: Vec<T> = var.iter().map(|&s| (s * inv + eps).sqrt()).collect();
        let rg = self.rg(x);
        let mean_var = self.push(
            Tensor::new(shape.clone(), mean.clone())?,
            Op::Mean { x, axes: axes.to_vec() },
            rg,
        );
        let std_var = self.push(
            Tensor::new(shape, std)?,
            Op::Std {
                x,
                axes: axes.to_vec(),
                mean,
            },
            rg,
        );
        Ok((mean_var, std_var))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or_else(|| dim_err!("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(dim_err!("concat axis {} out of range for {:?}", axis, base));
        }
        let mut total = 0;
        for (i, &p) in parts.iter().enumerate() {
            let s = self.shape(p);
            let agrees =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(ax, (a, b))| ax == axis || a == b);
            if !agrees {
                return Err(dim_err!(
                    "concat part {} has shape {:?}, incompatible with {:?} on axis {}",
                    i,
                    s,
                    base,
                    axis
                ));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let len = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(dim_err!(
                "narrow [{}, {}) on axis {} of {:?}",
                start,
                start + len,
                axis,
                shape
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let v = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&v[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(out_shape, data)?, Op::Narrow { x, axis, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshape(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let src = self.value(x);
        if broadcast_shape(src.shape(), shape)? != shape {
            return Err(dim_err!("cannot broadcast {:?} to {:?}", src.shape(), shape));
        }
        let idx = broadcast_index(src.shape(), shape);
        let data = idx.iter().map(|&i| src.data()[i]).collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape.to_vec(), data)?, Op::BroadcastTo(x), rg))
    }

    /// Zero-padded cross-correlation of `x: [c_in, h, w]` with `k: [c_out, c_in, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sk) = (self.shape(x), self.shape(k));
        if sx.len() != 3 || sk.len() != 4 || sx[0] != sk[1] {
            return Err(dim_err!("conv2d of input {:?} with kernel {:?}", sx, sk));
        }
        if stride == 0 {
            return Err(dim_err!("conv2d stride must be >= 1"));
        }
        let geom = ConvGeometry {
            c_in: sx[0],
            h: sx[1],
            w: sx[2],
            kh: sk[2],
            kw: sk[3],
            stride,
            pad,
        };
        if geom.kh > geom.h + 2 * pad || geom.kw > geom.w + 2 * pad {
            return Err(dim_err!(
                "kernel {}x{} larger than padded input {}x{}",
                geom.kh,
                geom.kw,
                geom.h + 2 * pad,
                geom.w + 2 * pad
            ));
        }
        let c_out = sk[0];
        let (oh, ow) = (geom.out_h(), geom.out_w());
        let cols = im2col(self.value(x).data(), &geom);
        let patch = geom.c_in * geom.kh * geom.kw;
        let mut out = vec![T::zero(); c_out * oh * ow];
        kernels::gemm(
            MatRef::new(self.value(k).data(), c_out, patch),
            MatRef::new(&cols, patch, oh * ow),
            T::zero(),
            &mut out,
        );
        let rg = self.rg(x) || self.rg(k);
        Ok(self.push(Tensor::new([c_out, oh, ow], out)?, Op::Conv2d { x, k, geom }, rg))
    }

    /// Bilinear lookup of `map: [c, h, w]` at continuous `(u, v)` rows of
    /// `coords: [n, 2]` (u along width). Coordinates are clamped to the grid.
    pub fn bilinear_sample(&mut self, map: Var, coords: Var) -> Result<Var> {
        let (sm, sc) = (self.shape(map), self.shape(coords));
        if sm.len() != 3 || sc.len() != 2 || sc[1] != 2 {
            return Err(dim_err!("bilinear_sample of map {:?} at coords {:?}", sm, sc));
        }
        let (c, h, w) = (sm[0], sm[1], sm[2]);
        let n = sc[0];
        if h == 0 || w == 0 {
            return Err(dim_err!("bilinear_sample on empty map {:?}", sm));
        }
        let m = self.value(map).data();
        let uv = self.value(coords).data();
        let mut out = vec![T::zero(); n * c];
        let plane = h * w;
        for p in 0..n {
            let t = bilinear_tap(uv[2 * p], uv[2 * p + 1], h, w);
            let one = T::one();
            let (w00, w01) = ((one - t.fx) * (one - t.fy), t.fx * (one - t.fy));
            let (w10, w11) = ((one - t.fx) * t.fy, t.fx * t.fy);
            let row = &mut out[p * c..(p + 1) * c];
            for (ch, o) in row.iter_mut().enumerate() {
                let base = &m[ch * plane..];
                *o = w00 * base[t.y0 * w + t.x0]
                    + w01 * base[t.y0 * w + t.x1]
                    + w10 * base[t.y1 * w + t.x0]
                    + w11 * base[t.y1 * w + t.x1];
            }
        }
        let rg = self.rg(map) || self.rg(coords);
        Ok(self.push(Tensor::new([n, c], out)?, Op::Bilinear { map, coords }, rg))
    }

    /// Appends a node whose value was computed by the caller and whose
    /// gradient is given by `rule`.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor<T>, rule: Box<dyn CustomBackward<T>>) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                rule,
            },
            rg,
        )
    }

    /// Accumulates `d loss / d leaf` into every `requires_grad` leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = self.nodes[i].op {
                let shape = self.nodes[i].value.shape().to_vec();
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    slot => *slot = Some(Tensor::new(shape, g)?),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out_shape = node.value.shape();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.rg(v) {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.value(v).numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                acc(*a, &mut |da| {
                    kernels::gemm(MatRef::new(g, m, n), MatRef::new(vb.data(), k, n).t(), T::one(), da)
                });
                acc(*b, &mut |db| {
                    kernels::gemm(MatRef::new(va.data(), m, k).t(), MatRef::new(g, m, n), T::one(), db)
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -T::one()
                } else {
                    T::one()
                };
                acc(*a, &mut |da| reduce_into(da, self.shape(*a), out_shape, g, |_, x| x));
                acc(*b, &mut |db| {
                    reduce_into(db, self.shape(*b), out_shape, g, |_, x| x * sign)
                });
            }
            Op::Mul(a, b) | Op::Div(a, b) => {
                let div = matches!(node.op, Op::Div(..));
                let (va, vb) = (self.value(*a), self.value(*b));
                let ia = broadcast_index(va.shape(), out_shape);
                let ib = broadcast_index(vb.shape(), out_shape);
                acc(*a, &mut |da| {
                    for (o, (&x, &y)) in ia.iter().zip(&ib).enumerate() {
                        let bv = vb.data()[y];
                        da[x] = da[x] + if div { g[o] / bv } else { g[o] * bv };
                    }
                });
                acc(*b, &mut |db| {
                    for (o, (&x, &y)) in ia.iter().zip(&ib).enumerate() {
                        let (av, bv) = (va.data()[x], vb.data()[y]);
                        db[y] = db[y] + if div { -g[o] * av / (bv * bv) } else { g[o] * av };
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x * *s)),
            Op::AddScalar(a) | Op::Reshape(a) => {
                acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x))
            }
            Op::Relu(a) => {
                let va = self.value(*a).data();
                acc(*a, &mut |da| {
                    for ((d, &x), &gv) in da.iter_mut().zip(va).zip(g) {
                        if x > T::zero() {
                            *d = *d + gv;
                        }
                    }
                })
            }
            Op::Sum(a) => acc(*a, &mut |da| da.iter_mut().for_each(|d| *d = *d + g[0])),
            Op::Mean { x, axes } => {
                let shape = self.shape(*x);
                let count: usize = axes.iter().map(|&ax| shape[ax]).product();
                let inv = T::one() / T::from_usize(count).unwrap();
                let (_, map) = reduction_map(shape, axes);
                acc(*x, &mut |dx| {
                    for (d, &slot) in dx.iter_mut().zip(&map) {
                        *d = *d + g[slot] * inv;
                    }
                })
            }
            Op::Std { x, axes, mean } => {
                let vx = self.value(*x);
                let count: usize = axes.iter().map(|&ax| vx.shape()[ax]).product();
                let n = T::from_usize(count).unwrap();
                let std = node.value.data();
                let (_, map) = reduction_map(vx.shape(), axes);
                acc(*x, &mut |dx| {
                    for ((d, &slot), &val) in dx.iter_mut().zip(&map).zip(vx.data()) {
                        *d = *d + g[slot] * (val - mean[slot]) / (n * std[slot]);
                    }
                })
            }
            Op::Concat { parts, axis } => {
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let total = out_shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p)[*axis] * inner;
                    acc(p, &mut |dp| {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + len];
                            dp[o * len..(o + 1) * len]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, &s)| *d = *d + s);
                        }
                    });
                    offset += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let shape = self.shape(*x);
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let len = out_shape[*axis] * inner;
                acc(*x, &mut |dx| {
                    for o in 0..outer {
                        let base = (o * shape[*axis] + start) * inner;
                        dx[base..base + len]
                            .iter_mut()
                            .zip(&g[o * len..(o + 1) * len])
                            .for_each(|(d, &s)| *d = *d + s);
                    }
                })
            }
            Op::BroadcastTo(x) => acc(*x, &mut |dx| reduce_into(dx, self.shape(*x), out_shape, g, |_, v| v)),
            Op::Conv2d { x, k, geom } => {
                let c_out = self.shape(*k)[0];
                let patch = geom.c_in * geom.kh * geom.kw;
                let ohw = geom.out_h() * geom.out_w();
                if self.rg(*k) {
                    let cols = im2col(self.value(*x).data(), geom);
                    acc(*k, &mut |dk| {
                        kernels::gemm(
                            MatRef::new(g, c_out, ohw),
                            MatRef::new(&cols, patch, ohw).t(),
                            T::one(),
                            dk,
                        )
                    });
                }
                if self.rg(*x) {
                    let mut dcols = vec![T::zero(); patch * ohw];
                    kernels::gemm(
                        MatRef::new(self.value(*k).data(), c_out, patch).t(),
                        MatRef::new(g, c_out, ohw),
                        T::zero(),
                        &mut dcols,
                    );
                    acc(*x, &mut |dx| col2im(&dcols, geom, dx));
                }
            }
            Op::Bilinear { map, coords } => {
                let sm = self.shape(*map);
                let (c, h, w) = (sm[0], sm[1], sm[2]);
                let plane = h * w;
                let uv = self.value(*coords).data();
                let n = uv.len() / 2;
                let one = T::one();
                acc(*map, &mut |dm| {
                    for p in 0..n {
                        let t = bilinear_tap(uv[2 * p], uv[2 * p + 1], h, w);
                        let weights = [
                            ((one - t.fx) * (one - t.fy), t.y0 * w + t.x0),
                            (t.fx * (one - t.fy), t.y0 * w + t.x1),
                            ((one - t.fx) * t.fy, t.y1 * w + t.x0),
                            (t.fx * t.fy, t.y1 * w + t.x1),
                        ];
                        for ch in 0..c {
                            let gv = g[p * c + ch];
                            for &(wt, off) in &weights {
                                let idx = ch * plane + off;
                                dm[idx] = dm[idx] + wt * gv;
                            }
                        }
                    }
                });
                let m = self.value(*map).data();
                acc(*coords, &mut |dc| {
                    for p in 0..n {
                        let t = bilinear_tap(uv[2 * p], uv[2 * p + 1], h, w);
                        let (mut du, mut dv) = (T::zero(), T::zero());
                        for ch in 0..c {
                            let base = &m[ch * plane..];
                            let (a, b) = (base[t.y0 * w + t.x0], base[t.y0 * w + t.x1]);
                            let (cc, d) = (base[t.y1 * w + t.x0], base[t.y1 * w + t.x1]);
                            let gv = g[p * c + ch];
                            du = du + gv * ((one - t.fy) * (b - a) + t.fy * (d - cc));
                            dv = dv + gv * ((one - t.fx) * (cc - a) + t.fx * (d - b));
                        }
                        if t.inside_u && w > 1 {
                            dc[2 * p] = dc[2 * p] + du;
                        }
                        if t.inside_v && h > 1 {
                            dc[2 * p + 1] = dc[2 * p + 1] + dv;
                        }
                    }
                });
            }
            Op::Custom { inputs, rule } => {
                let grad_out = Tensor::new(out_shape.to_vec(), g.to_vec())?;
                let values: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                let input_grads = rule.backward(&grad_out, &values);
                for (&v, gi) in inputs.iter().zip(input_grads) {
                    if let Some(gi) = gi {
                        if gi.numel() != self.value(v).numel() {
                            return Err(dim_err!(
                                "custom op {} returned gradient of shape {:?} for input {:?}",
                                rule.name(),
                                gi.shape(),
                                self.shape(v)
                            ));
                        }
                        acc(v, &mut |dv| {
                            dv.iter_mut().zip(gi.data()).for_each(|(d, &s)| *d = *d + s)
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Sums a broadcast gradient back down to `src_shape`.
fn reduce_into<T: Element>(
    dst: &mut [T],
    src_shape: &[usize],
    out_shape: &[usize],
    g: &[T],
    f: impl Fn(usize, T) -> T,
) {
    if src_shape == out_shape {
        for (o, (d, &x)) in dst.iter_mut().zip(g).enumerate() {
            *d = *d + f(o, x);
        }
        return;
    }
    let idx = broadcast_index(src_shape, out_shape);
    for (o, (&i, &x)) in idx.iter().zip(g).enumerate() {
        dst[i] = dst[i] + f(o, x);
    }
}
