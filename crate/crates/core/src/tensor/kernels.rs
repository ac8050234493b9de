//! Raw numeric kernels behind the graph operations.

use std::sync::atomic::{AtomicBool, Ordering};

use super::Element;

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enables or disables intra-op data parallelism. Results are identical
/// either way; deterministic runs switch it off to keep a single thread.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Maps `f` over `items`, in parallel when enabled. Output order follows
/// input order.
pub fn par_map<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    items.into_iter().map(f).collect()
}

/// Row-major matrix view: `rows x cols`, element `(i, j)` at `i * rs + j * cs`.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> MatRef<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn covers(&self) -> bool {
        self.rows == 0 || self.cols == 0 || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len()
    }
}

#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 1 << 21;

/// `c = a @ b + beta * c` with `c` contiguous `[a.rows, b.cols]`.
pub fn gemm<T: Element>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: &mut [T]) {
    assert_eq!(a.cols, b.rows, "inner dimensions");
    assert!(a.covers() && b.covers(), "strided view out of bounds");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(c.len(), m * n);
    if k == 0 {
        c.iter_mut().for_each(|v| *v = *v * beta);
        return;
    }
    #[cfg(feature = "parallel")]
    if parallel_enabled() && m * n * k >= PAR_THRESHOLD && m >= 8 {
        use rayon::prelude::*;
        let chunk = m.div_ceil(rayon::current_num_threads().max(1) * 2).max(4);
        c.par_chunks_mut(chunk * n).enumerate().for_each(|(ci, cblock)| {
            let r0 = ci * chunk;
            let rows = cblock.len() / n;
            let a_off = r0 * a.rs;
            T::gemm(
                rows,
                k,
                n,
                T::one(),
                &a.data[a_off..],
                a.rs as isize,
                a.cs as isize,
                b.data,
                b.rs as isize,
                b.cs as isize,
                beta,
                cblock,
                n as isize,
                1,
            );
        });
        return;
    }
    T::gemm(
        m,
        k,
        n,
        T::one(),
        a.data,
        a.rs as isize,
        a.cs as isize,
        b.data,
        b.rs as isize,
        b.cs as isize,
        beta,
        c,
        n as isize,
        1,
    );
}

/// Geometry of a 2D convolution over a `[c, h, w]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
}

/// Unfolds the input into a `[c_in*kh*kw, out_h*out_w]` column matrix.
pub fn im2col<T: Element>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let cols = oh * ow;
    let mut out = vec![T::zero(); g.patch() * cols];
    for c in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters columns back into an input-shaped buffer.
pub fn col2im<T: Element>(cols_buf: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let cols = oh * ow;
    for c in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols_buf[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Interpolation stencil for one continuous coordinate pair on an `h x w` grid.
#[derive(Debug, Clone, Copy)]
pub struct BilinearTap<T> {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub fx: T,
    pub fy: T,
    /// Whether the coordinate was inside the grid (clamping has zero slope otherwise).
    pub inside_u: bool,
    pub inside_v: bool,
}

pub fn bilinear_tap<T: Element>(u: T, v: T, h: usize, w: usize) -> BilinearTap<T> {
    fn axis<T: Element>(c: T, n: usize) -> (usize, usize, T, bool) {
        let max = T::from_usize(n - 1).unwrap();
        let inside = c >= T::zero() && c <= max;
        let c = c.max(T::zero()).min(max);
        if n == 1 {
            return (0, 0, T::zero(), inside);
        }
        let mut i0 = c.floor().to_usize().unwrap_or(0);
        if i0 >= n - 1 {
            i0 = n - 2;
        }
        let f = c - T::from_usize(i0).unwrap();
        (i0, i0 + 1, f, inside)
    }
    let (x0, x1, fx, inside_u) = axis(u, w);
    let (y0, y1, fy, inside_v) = axis(v, h);
    BilinearTap {
        x0,
        y0,
        x1,
        y1,
        fx,
        fy,
        inside_u,
        inside_v,
    }
}
