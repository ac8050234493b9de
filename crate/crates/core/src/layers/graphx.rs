//! GraphX: learned mixing over the whole point set followed by a shared
//! affine map.
//!
//! For input features `f_i` (rows of `x`), output row `k` is
//!
//! ```text
//! n_k   = sum_i w_ik f_i + b_k · 1
//! out_k = h(Wᵀ n_k + b)
//! ```
//!
//! `b_k` is a scalar per output point broadcast over all feature dimensions.
//! `W` is either dense (`d_in x d_out`) or factored as `W1 W2` with inner
//! rank `r < d_in / 2`; the factored product is never materialised.
//!
//! The slim variant replaces the learned mixing with the mean over input
//! points, scaled and shifted per feature dimension and replicated to
//! `n_out` rows.

use rand::Rng;

use super::{kaiming_uniform, uniform, Activation, Bound, ParamId, ParamStore};
use crate::error::{config_err, dim_err, Result};
use crate::tensor::{Element, Graph, Tensor, Var};

#[derive(Debug, Clone)]
pub enum Transform {
    Dense(ParamId),
    Factored(ParamId, ParamId),
}

#[derive(Debug, Clone)]
pub enum Mixing {
    Learned { weight: ParamId, bias: ParamId },
    Slim { scale: ParamId, shift: ParamId },
}

/// GraphX layer whose tensors live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GraphX {
    pub mixing: Mixing,
    pub transform: Transform,
    pub bias: ParamId,
    pub activation: Activation,
    pub n_in: usize,
    pub n_out: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub enum TransformVars {
    Dense(Var),
    Factored(Var, Var),
}

#[derive(Debug, Clone, Copy)]
pub enum MixingVars {
    Learned { weight: Var, bias: Var },
    Slim { scale: Var, shift: Var, n_out: usize },
}

/// Graph leaves of one GraphX layer.
#[derive(Debug, Clone, Copy)]
pub struct GraphXVars {
    pub mixing: MixingVars,
    pub transform: TransformVars,
    pub bias: Var,
    pub activation: Activation,
}

fn check_rank(rank: Option<usize>, d_in: usize) -> Result<()> {
    match rank {
        Some(r) if r == 0 || 2 * r >= d_in => Err(config_err!(
            "factored rank {} must satisfy 0 < rank < d_in/2 = {}",
            r,
            d_in as f64 / 2.0
        )),
        _ => Ok(()),
    }
}

impl GraphX {
    /// Builds a learned-mixing layer; `rank` selects the factored transform.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        n_in: usize,
        n_out: usize,
        d_in: usize,
        d_out: usize,
        rank: Option<usize>,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        check_rank(rank, d_in)?;
        let bound = 1.0 / (n_in.max(1) as f64).sqrt();
        let weight = store.add(format!("{name}.mix_weight"), uniform(&[n_out, n_in], bound, rng));
        let bias = store.add(format!("{name}.mix_bias"), Tensor::zeros([n_out]));
        let mut layer = Self::with_mixing(
            store,
            name,
            Mixing::Learned { weight, bias },
            d_in,
            d_out,
            rank,
            activation,
            rng,
        );
        layer.n_in = n_in;
        layer.n_out = n_out;
        Ok(layer)
    }

    /// Builds the mean-aggregation variant. `n_in` is only used for counting.
    #[allow(clippy::too_many_arguments)]
    pub fn new_slim<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        n_in: usize,
        n_out: usize,
        d_in: usize,
        d_out: usize,
        rank: Option<usize>,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        check_rank(rank, d_in)?;
        let scale = store.add(format!("{name}.slim_scale"), Tensor::full([d_in], T::one()));
        let shift = store.add(format!("{name}.slim_shift"), Tensor::zeros([d_in]));
        let mut layer = Self::with_mixing(
            store,
            name,
            Mixing::Slim { scale, shift },
            d_in,
            d_out,
            rank,
            activation,
            rng,
        );
        layer.n_in = n_in;
        layer.n_out = n_out;
        Ok(layer)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_mixing<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        mixing: Mixing,
        d_in: usize,
        d_out: usize,
        rank: Option<usize>,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let transform = match rank {
            None => Transform::Dense(store.add(format!("{name}.weight"), kaiming_uniform(&[d_in, d_out], d_in, rng))),
            Some(r) => Transform::Factored(
                store.add(format!("{name}.weight1"), kaiming_uniform(&[d_in, r], d_in, rng)),
                store.add(format!("{name}.weight2"), kaiming_uniform(&[r, d_out], r, rng)),
            ),
        };
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([d_out]));
        Self {
            mixing,
            transform,
            bias,
            activation,
            n_in: 0,
            n_out: 0,
            d_in,
            d_out,
            rank,
        }
    }

    pub fn vars(&self, p: &Bound) -> GraphXVars {
        GraphXVars {
            mixing: match self.mixing {
                Mixing::Learned { weight, bias } => MixingVars::Learned {
                    weight: p[weight],
                    bias: p[bias],
                },
                Mixing::Slim { scale, shift } => MixingVars::Slim {
                    scale: p[scale],
                    shift: p[shift],
                    n_out: self.n_out,
                },
            },
            transform: match self.transform {
                Transform::Dense(w) => TransformVars::Dense(p[w]),
                Transform::Factored(w1, w2) => TransformVars::Factored(p[w1], p[w2]),
            },
            bias: p[self.bias],
            activation: self.activation,
        }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        graphx_forward(g, x, &self.vars(p))
    }

    pub fn is_slim(&self) -> bool {
        matches!(self.mixing, Mixing::Slim { .. })
    }

    /// Snapshot of the layer's tensors; `None` for slim layers, which have no
    /// mixing matrix.
    pub fn params<T: Element>(&self, store: &ParamStore<T>) -> Option<GraphXParams<T>> {
        let Mixing::Learned { weight, bias } = self.mixing else {
            return None;
        };
        Some(GraphXParams {
            mixing_weight: store.get(weight).clone(),
            mixing_bias: store.get(bias).clone(),
            transform: match self.transform {
                Transform::Dense(w) => vec![store.get(w).clone()],
                Transform::Factored(w1, w2) => vec![store.get(w1).clone(), store.get(w2).clone()],
            },
            bias: store.get(self.bias).clone(),
            activation: self.activation,
        })
    }
}

/// Free-standing GraphX parameters (learned mixing), used by tests and analysis.
#[derive(Debug, Clone)]
pub struct GraphXParams<T: Element> {
    /// `[n_out, n_in]`, entry `(k, i)` is `w_ik`.
    pub mixing_weight: Tensor<T>,
    /// `[n_out]`, the scalar `b_k` per output point.
    pub mixing_bias: Tensor<T>,
    /// `[W]` (dense, `[d_in, d_out]`) or `[W1, W2]` (factored).
    pub transform: Vec<Tensor<T>>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Element> GraphXParams<T> {
    pub fn new(
        mixing_weight: Tensor<T>,
        mixing_bias: Tensor<T>,
        transform: Vec<Tensor<T>>,
        bias: Tensor<T>,
        activation: Activation,
    ) -> Result<Self> {
        let p = Self {
            mixing_weight,
            mixing_bias,
            transform,
            bias,
            activation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_in(&self) -> usize {
        self.mixing_weight.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.mixing_weight.shape()[0]
    }

    pub fn d_in(&self) -> usize {
        self.transform[0].shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.bias.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let mw = self.mixing_weight.shape();
        if mw.len() != 2 || self.mixing_bias.shape() != [mw[0]] {
            return Err(dim_err!(
                "mixing weight {:?} and bias {:?} disagree",
                mw,
                self.mixing_bias.shape()
            ));
        }
        let d_out = self.bias.shape().first().copied().unwrap_or(0);
        match self.transform.as_slice() {
            [w] if w.rank() == 2 && w.shape()[1] == d_out => Ok(()),
            [w1, w2]
                if w1.rank() == 2 && w2.rank() == 2 && w1.shape()[1] == w2.shape()[0] && w2.shape()[1] == d_out =>
            {
                check_rank(Some(w1.shape()[1]), w1.shape()[0])
            }
            _ => Err(dim_err!(
                "transform shapes {:?} do not match bias {:?}",
                self.transform.iter().map(|t| t.shape().to_vec()).collect::<Vec<_>>(),
                self.bias.shape()
            )),
        }
    }

    /// Registers the tensors on `g`.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> GraphXVars {
        let weight = g.leaf(self.mixing_weight.clone(), requires_grad);
        let bias = g.leaf(self.mixing_bias.clone(), requires_grad);
        let transform = match self.transform.as_slice() {
            [w] => TransformVars::Dense(g.leaf(w.clone(), requires_grad)),
            [w1, w2] => TransformVars::Factored(g.leaf(w1.clone(), requires_grad), g.leaf(w2.clone(), requires_grad)),
            _ => unreachable!("validated"),
        };
        GraphXVars {
            mixing: MixingVars::Learned { weight, bias },
            transform,
            bias: g.leaf(self.bias.clone(), requires_grad),
            activation: self.activation,
        }
    }
}

/// Applies one GraphX layer to `x: [n_in, d_in]`.
pub fn graphx_forward<T: Element>(g: &mut Graph<T>, x: Var, v: &GraphXVars) -> Result<Var> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 2 {
        return Err(dim_err!("GraphX input must be [points, features], got {:?}", xs));
    }
    let mixed = match v.mixing {
        MixingVars::Learned { weight, bias } => {
            let ws = g.shape(weight);
            if ws[1] != xs[0] {
                return Err(dim_err!(
                    "GraphX mixing weight {:?} expects {} input points, got {}",
                    ws,
                    ws[1],
                    xs[0]
                ));
            }
            let n_out = ws[0];
            let n = g.matmul(weight, x)?;
            let b = g.reshape(bias, &[n_out, 1])?;
            g.add(n, b)?
        }
        MixingVars::Slim { scale, shift, n_out } => {
            let mean = g.mean(x, &[0])?;
            let scaled = g.mul(mean, scale)?;
            let shifted = g.add(scaled, shift)?;
            g.broadcast_to(shifted, &[n_out, xs[1]])?
        }
    };
    let y = match v.transform {
        TransformVars::Dense(w) => g.matmul(mixed, w)?,
        TransformVars::Factored(w1, w2) => {
            let low = g.matmul(mixed, w1)?;
            g.matmul(low, w2)?
        }
    };
    let y = g.add(y, v.bias)?;
    Ok(v.activation.apply(g, y))
}
