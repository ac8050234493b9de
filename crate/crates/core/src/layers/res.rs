//! Residual blocks: `out = main(x) + residual(x)`.
//!
//! The main branch is an FC layer with ReLU followed by a second layer (FC
//! for ResFC, GraphX for ResGraphX). The residual branch is the identity when
//! neither the point count nor the width changes, an FC layer when only the
//! width changes, and a GraphX layer when the point count changes.

use super::{Bound, GraphX, Linear};
use crate::error::{config_err, Result};
use crate::tensor::{Element, Graph, Var};

/// A single deformation-network layer.
#[derive(Debug, Clone)]
pub enum Layer {
    Linear(Linear),
    GraphX(GraphX),
}

impl Layer {
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        match self {
            Layer::Linear(l) => l.forward(g, p, x),
            Layer::GraphX(l) => l.forward(g, p, x),
        }
    }

    pub fn d_in(&self) -> usize {
        match self {
            Layer::Linear(l) => l.d_in,
            Layer::GraphX(l) => l.d_in,
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            Layer::Linear(l) => l.d_out,
            Layer::GraphX(l) => l.d_out,
        }
    }

    /// Output point count given the input count.
    pub fn points_out(&self, n_in: usize) -> usize {
        match self {
            Layer::Linear(_) => n_in,
            Layer::GraphX(l) => l.n_out,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Residual {
    Identity,
    Linear(Linear),
    GraphX(GraphX),
}

#[derive(Debug, Clone)]
pub struct ResBlock {
    pub main: Vec<Layer>,
    pub residual: Residual,
}

impl ResBlock {
    /// Validates the residual choice against the main branch's shape change.
    pub fn new(main: Vec<Layer>, residual: Residual, n_in: usize) -> Result<Self> {
        let first = main.first().ok_or_else(|| config_err!("empty residual main branch"))?;
        let d_in = first.d_in();
        let d_out = main.last().unwrap().d_out();
        let n_out = main.iter().fold(n_in, |n, l| l.points_out(n));
        match &residual {
            Residual::Identity if n_out != n_in || d_out != d_in => {
                return Err(config_err!(
                    "identity residual needs an unchanged shape, main maps ({n_in}, {d_in}) -> ({n_out}, {d_out})"
                ))
            }
            Residual::Linear(_) if n_out != n_in => {
                return Err(config_err!(
                    "FC residual cannot change the point count ({n_in} -> {n_out}); use a GraphX residual"
                ))
            }
            Residual::Linear(l) if l.d_in != d_in || l.d_out != d_out => {
                return Err(config_err!(
                    "FC residual maps {} -> {}, main maps {d_in} -> {d_out}",
                    l.d_in,
                    l.d_out
                ))
            }
            Residual::GraphX(l) if l.d_in != d_in || l.d_out != d_out || l.n_out != n_out => {
                return Err(config_err!(
                    "GraphX residual maps ({}, {}) -> ({}, {}), main maps ({n_in}, {d_in}) -> ({n_out}, {d_out})",
                    l.n_in,
                    l.d_in,
                    l.n_out,
                    l.d_out
                ))
            }
            _ => {}
        }
        Ok(Self { main, residual })
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        res_graphx_forward(
            g,
            x,
            |g, x| self.main.iter().try_fold(x, |h, l| l.forward(g, p, h)),
            |g, x| match &self.residual {
                Residual::Identity => Ok(x),
                Residual::Linear(l) => l.forward(g, p, x),
                Residual::GraphX(l) => l.forward(g, p, x),
            },
        )
    }

    pub fn d_out(&self) -> usize {
        self.main.last().unwrap().d_out()
    }

    pub fn points_out(&self, n_in: usize) -> usize {
        self.main.iter().fold(n_in, |n, l| l.points_out(n))
    }
}

/// `main(x) + residual(x)`.
pub fn res_graphx_forward<T: Element>(
    g: &mut Graph<T>,
    x: Var,
    main: impl FnOnce(&mut Graph<T>, Var) -> Result<Var>,
    residual: impl FnOnce(&mut Graph<T>, Var) -> Result<Var>,
) -> Result<Var> {
    let m = main(g, x)?;
    let r = residual(g, x)?;
    if g.shape(m) != g.shape(r) {
        return Err(config_err!(
            "residual branch shape {:?} differs from main branch {:?}",
            g.shape(r),
            g.shape(m)
        ));
    }
    g.add(m, r)
}
