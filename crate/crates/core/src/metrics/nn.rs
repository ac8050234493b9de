//! Exact nearest-neighbour queries in 3D.
//!
//! Both backends use the same squared-distance expression and break ties by
//! the lowest target index, so they agree bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::tensor::Element;

/// Search strategy for nearest-neighbour queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", try_from = "RawBackend")]
pub enum NNBackend {
    BruteForce,
    /// Uniform grid over the target set. `cell_size = None` uses
    /// `bbox_diagonal / 32`.
    #[default]
    UniformGrid,
    UniformGridWithCell {
        cell_size: f64,
    },
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum BackendKind {
    BruteForce,
    UniformGrid,
    UniformGridWithCell,
}

/// Strict table form; serde cannot reject unknown keys on unit variants of
/// a tagged enum by itself.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackend {
    kind: BackendKind,
    cell_size: Option<f64>,
}

impl TryFrom<RawBackend> for NNBackend {
    type Error = String;

    fn try_from(r: RawBackend) -> Result<Self, String> {
        match (r.kind, r.cell_size) {
            (BackendKind::BruteForce, None) => Ok(NNBackend::BruteForce),
            (BackendKind::UniformGrid, None) => Ok(NNBackend::UniformGrid),
            (BackendKind::UniformGridWithCell, Some(c)) if c > 0.0 && c.is_finite() => {
                Ok(NNBackend::UniformGridWithCell { cell_size: c })
            }
            (BackendKind::UniformGridWithCell, _) => Err("uniform_grid_with_cell needs a positive cell_size".into()),
            (_, Some(_)) => Err("cell_size is only valid with kind = \"uniform_grid_with_cell\"".into()),
        }
    }
}

#[inline]
pub fn sq_dist<T: Element>(a: &[T], b: &[T]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// For every query row, `(index, squared distance)` of the nearest target row.
/// Both slices are flat `[n, 3]` buffers; `targets` must be nonempty.
pub fn nearest<T: Element>(queries: &[T], targets: &[T], backend: NNBackend) -> Vec<(usize, T)> {
    match backend {
        NNBackend::BruteForce => brute_force(queries, targets),
        NNBackend::UniformGrid => UniformGrid::build(targets, None).query_all(queries),
        NNBackend::UniformGridWithCell { cell_size } => UniformGrid::build(targets, Some(cell_size)).query_all(queries),
    }
}

pub fn brute_force<T: Element>(queries: &[T], targets: &[T]) -> Vec<(usize, T)> {
    queries
        .chunks_exact(3)
        .map(|q| {
            let mut best = (0, T::infinity());
            for (j, t) in targets.chunks_exact(3).enumerate() {
                let d = sq_dist(q, t);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

const MAX_CELLS_PER_AXIS: usize = 256;

/// Bucket grid over a fixed point set with ring-by-ring exact search.
pub struct UniformGrid<'a, T> {
    points: &'a [T],
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    /// CSR layout: points of cell `c` are `order[start[c]..start[c + 1]]`,
    /// in increasing index order.
    start: Vec<usize>,
    order: Vec<usize>,
}

impl<'a, T: Element> UniformGrid<'a, T> {
    pub fn build(points: &'a [T], cell_size: Option<f64>) -> Self {
        let n = points.len() / 3;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points.chunks_exact(3) {
            for a in 0..3 {
                let v = p[a].as_f64();
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        if n == 0 {
            lo = [0.0; 3];
            hi = [0.0; 3];
        }
        let diag = (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
        let mut cell = cell_size.unwrap_or(diag / 32.0);
        if !cell.is_finite() || cell <= 0.0 {
            cell = 1.0;
        }
        let extent_max = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        if extent_max / cell > MAX_CELLS_PER_AXIS as f64 {
            cell = extent_max / MAX_CELLS_PER_AXIS as f64;
        }
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).min(MAX_CELLS_PER_AXIS));
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            start: Vec::new(),
            order: Vec::new(),
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let cells: Vec<usize> = points
            .chunks_exact(3)
            .map(|p| {
                let c = grid.cell_of(p);
                grid.flat(c)
            })
            .collect();
        let mut count = vec![0usize; ncells + 1];
        for &c in &cells {
            count[c + 1] += 1;
        }
        for i in 0..ncells {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut order = vec![0; n];
        for (i, &c) in cells.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        grid.start = count;
        grid.order = order;
        grid
    }

    fn cell_of(&self, p: &[T]) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let f = ((p[a].as_f64() - self.origin[a]) / self.cell).floor();
            if f <= 0.0 {
                0
            } else {
                (f as usize).min(self.dims[a] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    pub fn query_all(&self, queries: &[T]) -> Vec<(usize, T)> {
        queries.chunks_exact(3).map(|q| self.query(q)).collect()
    }

    /// Nearest point to `q` (lowest index on ties).
    pub fn query(&self, q: &[T]) -> (usize, T) {
        let mut best = (usize::MAX, T::infinity());
        if self.order.is_empty() {
            return best;
        }
        let home = self.cell_of(q);
        let qf = [q[0].as_f64(), q[1].as_f64(), q[2].as_f64()];
        let max_r = self.dims.iter().copied().max().unwrap();
        for r in 0..=max_r {
            let lo = home.map(|c| c as isize - r as isize);
            let hi = home.map(|c| c as isize + r as isize);
            for i in lo[0].max(0)..=hi[0].min(self.dims[0] as isize - 1) {
                for j in lo[1].max(0)..=hi[1].min(self.dims[1] as isize - 1) {
                    for k in lo[2].max(0)..=hi[2].min(self.dims[2] as isize - 1) {
                        let on_shell = i == lo[0] || i == hi[0] || j == lo[1] || j == hi[1] || k == lo[2] || k == hi[2];
                        if !on_shell {
                            continue;
                        }
                        let c = self.flat([i as usize, j as usize, k as usize]);
                        for &idx in &self.order[self.start[c]..self.start[c + 1]] {
                            let d = sq_dist(q, &self.points[3 * idx..3 * idx + 3]);
                            if d < best.1 || (d == best.1 && idx < best.0) {
                                best = (idx, d);
                            }
                        }
                    }
                }
            }
            // Distance from q to the nearest cell outside the visited block.
            let mut bound = f64::INFINITY;
            for a in 0..3 {
                if lo[a] > 0 {
                    let edge = self.origin[a] + lo[a] as f64 * self.cell;
                    bound = bound.min((qf[a] - edge).max(0.0));
                }
                if hi[a] < self.dims[a] as isize - 1 {
                    let edge = self.origin[a] + (hi[a] + 1) as f64 * self.cell;
                    bound = bound.min((edge - qf[a]).max(0.0));
                }
            }
            if bound.is_infinite() {
                break;
            }
            // Absolute slack for rounding in cell assignment.
            let mag = (0..3)
                .map(|a| qf[a].abs().max(self.origin[a].abs() + self.dims[a] as f64 * self.cell))
                .fold(0.0, f64::max);
            let bound = (bound - 8.0 * T::epsilon().as_f64() * mag).max(0.0);
            // Margin covers rounding in `sq_dist`, so equidistant points with
            // a lower index in unvisited cells are still examined.
            let margin = 1.0 - 16.0 * T::epsilon().as_f64();
            if best.1.as_f64() < bound * bound * margin {
                break;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_matches_brute_force_including_far_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let targets: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let queries: Vec<f64> = (0..600).map(|_| rng.random_range(-4.0..4.0)).collect();
        let a = brute_force(&queries, &targets);
        let b = nearest(&queries, &targets, NNBackend::UniformGrid);
        assert_eq!(a, b);
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let targets = [1.0f64, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let q = [0.0f64, 0.0, 0.0];
        assert_eq!(brute_force(&q, &targets)[0].0, 0);
        assert_eq!(nearest(&q, &targets, NNBackend::UniformGrid)[0].0, 0);
        let dup = [2.0f64, 2.0, 2.0, 2.0, 2.0, 2.0];
        assert_eq!(nearest(&q, &dup, NNBackend::UniformGrid)[0].0, 0);
    }

    #[test]
    fn single_point_and_degenerate_extent() {
        let targets = [0.5f32, 0.5, 0.5];
        let q = [0.0f32, 0.0, 0.0, 9.0, 9.0, 9.0];
        assert_eq!(nearest(&q, &targets, NNBackend::UniformGrid), brute_force(&q, &targets));
    }
}
