//! Central finite-difference checks of tape gradients.
//!
//! A check builds a scalar function of some input tensors on a fresh
//! [`Graph`], runs `backward`, and compares every requested input
//! coordinate with `(f(x + h) - f(x - h)) / 2h`.

mod suite;

pub use suite::{suite, SuiteEntry, END_TO_END_TOL, OP_TOL};

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Graph, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of one gradient comparison.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: String,
    /// `max |analytic - numeric| / max(max |analytic|, max |numeric|, 1e-8)`
    /// over all checked coordinates of all inputs.
    pub rel_error: f64,
    pub checked: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_error.is_finite() && self.rel_error < tol
    }
}

/// Which coordinates of each input to probe.
pub enum Probe {
    All,
    /// A fixed number of coordinates per input, drawn with the supplied RNG.
    Sample(usize),
}

/// Compares tape gradients with central differences.
///
/// `f` receives a graph and one leaf per input and returns a scalar.
pub fn check<F>(name: &str, inputs: &[Tensor<f64>], probe: Probe, rng: &mut impl Rng, f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.leaf(x.clone(), false)).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.leaf(x.clone(), true)).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;

    let mut max_diff = 0.0f64;
    let mut scale = 1e-8f64;
    let mut checked = 0;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = g
            .grad(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape().to_vec()));
        let coords: Vec<usize> = match probe {
            Probe::All => (0..input.numel()).collect(),
            Probe::Sample(n) => (0..n.min(input.numel()))
                .map(|_| rng.random_range(0..input.numel()))
                .collect(),
        };
        for i in coords {
            let x0 = input.data()[i];
            work[k].data_mut()[i] = x0 + DEFAULT_STEP;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = x0 - DEFAULT_STEP;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = x0;
            let numeric = (plus - minus) / (2.0 * DEFAULT_STEP);
            let a = analytic.data()[i];
            max_diff = max_diff.max((a - numeric).abs());
            scale = scale.max(a.abs()).max(numeric.abs());
            checked += 1;
        }
    }
    Ok(GradReport {
        name: name.to_string(),
        rel_error: max_diff / scale,
        checked,
    })
}

/// Uniform tensor in `[lo, hi)`.
pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Uniform tensor whose entries stay at least `gap` away from zero, to keep
/// ReLU kinks out of finite-difference stencils.
pub fn uniform_away_from_zero(shape: &[usize], hi: f64, gap: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.random_range(gap..hi);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}
