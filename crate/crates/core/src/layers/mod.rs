//! Parametric building blocks.
//!
//! Parameters live in a [`ParamStore`] owned by the model. Layers only hold
//! [`ParamId`]s; at the start of every forward pass the store is bound to a
//! [`Graph`] ([`ParamStore::bind`]) and layers look their leaves up through
//! the resulting [`Bound`] table.

mod encoder;
mod graphx;
mod res;

pub use encoder::{EncoderConfig, ImageEncoder, PointEncoder};
pub use graphx::{graphx_forward, GraphX, GraphXParams, GraphXVars, Mixing, MixingVars, Transform, TransformVars};
pub use res::{res_graphx_forward, Layer, ResBlock, Residual};

use std::ops::Index;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Index of a tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Element> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.tensors.iter_mut()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, id: ParamId, t: Tensor<T>) -> Result<()> {
        if t.shape() != self.tensors[id.0].shape() {
            return Err(dim_err!(
                "parameter {} has shape {:?}, got {:?}",
                self.names[id.0],
                self.tensors[id.0].shape(),
                t.shape()
            ));
        }
        self.tensors[id.0] = t;
        Ok(())
    }

    /// Registers every parameter as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| g.leaf(t.clone(), requires_grad)).collect(),
        }
    }
}

/// Parameter leaves of one graph, indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Table over externally created leaves, in [`ParamStore`] order.
    pub fn new(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Relu,
}

impl Activation {
    pub fn apply<T: Element>(self, g: &mut Graph<T>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => g.relu(x),
        }
    }
}

/// Kaiming-uniform initialisation: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn kaiming_uniform<T: Element>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| T::from_f64_lossy(rng.random_range(-bound..bound)))
}

pub fn uniform<T: Element>(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<T> {
    if bound == 0.0 {
        return Tensor::zeros(shape.to_vec());
    }
    Tensor::from_fn(shape.to_vec(), |_| T::from_f64_lossy(rng.random_range(-bound..bound)))
}

/// Fully connected layer applied row-wise: `h(x W + b)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
    pub activation: Activation,
}

impl Linear {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), kaiming_uniform(&[d_in, d_out], d_in, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([d_out]));
        Self {
            weight,
            bias,
            d_in,
            d_out,
            activation,
        }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        linear_forward(g, x, p[self.weight], p[self.bias], self.activation)
    }

    pub fn param_count(&self) -> usize {
        self.d_in * self.d_out + self.d_out
    }
}

pub fn linear_forward<T: Element>(
    g: &mut Graph<T>,
    x: Var,
    weight: Var,
    bias: Var,
    activation: Activation,
) -> Result<Var> {
    let y = g.matmul(x, weight)?;
    let y = g.add(y, bias)?;
    Ok(activation.apply(g, y))
}
