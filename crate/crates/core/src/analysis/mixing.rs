//! Mixing-matrix statistics: per-row spread and numerical rank.

use std::fmt::Write;

use nalgebra::DMatrix;

use crate::error::{dim_err, Result};
use crate::tensor::{Element, Tensor};

/// Singular values above this fraction of the largest count towards the rank.
pub const RANK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub n_out: usize,
    pub n_in: usize,
    /// Mean of each output row over the input points.
    pub row_mean: Vec<f64>,
    /// Population variance of each output row over the input points.
    pub row_var: Vec<f64>,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub numerical_rank: usize,
}

pub fn inspect_mixing<T: Element>(w: &Tensor<T>) -> Result<MixingReport> {
    if w.rank() != 2 || w.numel() == 0 {
        return Err(dim_err!(
            "mixing matrix must be a nonempty [n_out, n_in], got {:?}",
            w.shape()
        ));
    }
    let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
    let (mut row_mean, mut row_var) = (Vec::with_capacity(n_out), Vec::with_capacity(n_out));
    for row in w.rows() {
        let mean = row.iter().map(|x| x.as_f64()).sum::<f64>() / n_in as f64;
        let var = row.iter().map(|x| (x.as_f64() - mean).powi(2)).sum::<f64>() / n_in as f64;
        row_mean.push(mean);
        row_var.push(var);
    }
    let m = DMatrix::from_row_iterator(n_out, n_in, w.data().iter().map(|x| x.as_f64()));
    let mut singular_values: Vec<f64> = m.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let numerical_rank = numerical_rank(&singular_values);
    Ok(MixingReport {
        n_out,
        n_in,
        row_mean,
        row_var,
        singular_values,
        numerical_rank,
    })
}

/// Count of singular values above [`RANK_TOLERANCE`] times the largest.
pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let max = singular_values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

impl MixingReport {
    pub fn mean_row_variance(&self) -> f64 {
        self.row_var.iter().sum::<f64>() / self.n_out as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "mixing matrix {} x {}", self.n_out, self.n_in).unwrap();
        writeln!(
            s,
            "numerical rank: {} (tolerance {:e} * sigma_max)",
            self.numerical_rank, RANK_TOLERANCE
        )
        .unwrap();
        writeln!(s, "mean per-row variance: {:.6e}", self.mean_row_variance()).unwrap();
        let top: Vec<String> = self
            .singular_values
            .iter()
            .take(8)
            .map(|v| format!("{v:.4e}"))
            .collect();
        writeln!(s, "leading singular values: {}", top.join(" ")).unwrap();
        s
    }

    /// `row,mean,variance` per output row.
    pub fn rows_csv(&self) -> String {
        let mut s = String::from("row,mean,variance\n");
        for (i, (m, v)) in self.row_mean.iter().zip(&self.row_var).enumerate() {
            writeln!(s, "{i},{m},{v}").unwrap();
        }
        s
    }

    pub fn spectrum_csv(&self) -> String {
        let mut s = String::from("index,singular_value\n");
        for (i, v) in self.singular_values.iter().enumerate() {
            writeln!(s, "{i},{v}").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_matrix_is_rank_one_with_flat_rows() {
        let n = 12;
        let r = inspect_mixing(&Tensor::full([n, n], 1.0 / n as f64)).unwrap();
        assert_eq!(r.numerical_rank, 1);
        assert!(r.row_var.iter().all(|&v| v < 1e-30));
    }

    #[test]
    fn identity_has_full_rank() {
        let r = inspect_mixing(&Tensor::<f32>::eye(9)).unwrap();
        assert_eq!(r.numerical_rank, 9);
        assert!(r.singular_values.iter().all(|&s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        assert_eq!(inspect_mixing(&Tensor::<f64>::zeros([3, 4])).unwrap().numerical_rank, 0);
    }
}
