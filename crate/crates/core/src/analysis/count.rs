//! Analytic parameter and multiply-accumulate counts.
//!
//! Counts depend only on the model configuration. FC layers are charged
//! once per point; GraphX layers pay for mixing (`n_out * n_in * d_in`, or
//! `n_in * d_in` for the mean in the slim variant) plus the transform.
//! Element-wise work, AdaIN statistics and bilinear sampling are ignored.

use std::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layers::{GraphX, Layer, Linear, Residual};
use crate::pipeline::{ModelConfig, PcdNet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCount {
    pub name: String,
    pub kind: &'static str,
    pub params: usize,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountReport {
    pub layers: Vec<LayerCount>,
}

/// `(params, macs)` of a 3x3-style conv producing `c_out x h x w`.
pub fn conv_counts(c_out: usize, c_in: usize, k: usize, h: usize, w: usize) -> (usize, u64) {
    let weights = c_out * c_in * k * k;
    (weights + c_out, (weights * h * w) as u64)
}

/// `(params, macs)` of an FC layer applied to `n` points.
pub fn linear_counts(n: usize, d_in: usize, d_out: usize) -> (usize, u64) {
    (d_in * d_out + d_out, (n * d_in * d_out) as u64)
}

/// `(params, macs)` of a GraphX layer.
pub fn graphx_counts(
    n_in: usize,
    n_out: usize,
    d_in: usize,
    d_out: usize,
    rank: Option<usize>,
    slim: bool,
) -> (usize, u64) {
    let (mix_p, mix_m) = if slim {
        (2 * d_in, n_in * d_in)
    } else {
        (n_out * n_in + n_out, n_out * n_in * d_in)
    };
    let (tr_p, tr_m) = match rank {
        None => (d_in * d_out, n_out * d_in * d_out),
        Some(k) => (d_in * k + k * d_out, n_out * (d_in * k + k * d_out)),
    };
    (mix_p + tr_p + d_out, (mix_m + tr_m) as u64)
}

fn gx(name: String, l: &GraphX) -> LayerCount {
    let (params, macs) = graphx_counts(l.n_in, l.n_out, l.d_in, l.d_out, l.rank, l.is_slim());
    LayerCount {
        name,
        kind: if l.is_slim() { "graphx_slim" } else { "graphx" },
        params,
        macs,
    }
}

fn fc(name: String, n: usize, l: &Linear) -> LayerCount {
    let (params, macs) = linear_counts(n, l.d_in, l.d_out);
    LayerCount {
        name,
        kind: "fc",
        params,
        macs,
    }
}

pub fn count_params_macs(config: &ModelConfig) -> Result<CountReport> {
    // Architecture only; parameter values never enter the counts.
    let model = PcdNet::<f32>::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut layers = Vec::new();
    for (i, (c_out, c_in, h, w)) in model.image_encoder.conv_shapes().into_iter().enumerate() {
        let (params, macs) = conv_counts(c_out, c_in, 3, h, w);
        layers.push(LayerCount {
            name: format!("image.conv{i}"),
            kind: "conv",
            params,
            macs,
        });
    }
    let mut n = config.points;
    for (i, b) in model.point_encoder.blocks.iter().enumerate() {
        layers.push(fc(format!("points.block{i}"), n, b));
    }
    for (i, stage) in model.stages.iter().enumerate() {
        let n_in = n;
        for (j, l) in stage.layers().into_iter().enumerate() {
            let name = format!("deform.block{i}.{j}");
            match l {
                Layer::Linear(l) => layers.push(fc(name, n, l)),
                Layer::GraphX(l) => {
                    layers.push(gx(name, l));
                    n = l.n_out;
                }
            }
        }
        match stage.residual() {
            Some(Residual::Linear(l)) => layers.push(fc(format!("deform.block{i}.residual"), n_in, l)),
            Some(Residual::GraphX(l)) => layers.push(gx(format!("deform.block{i}.residual"), l)),
            _ => {}
        }
    }
    layers.push(fc("deform.head".into(), n, &model.head));
    Ok(CountReport { layers })
}

impl CountReport {
    pub fn total_params(&self) -> usize {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,kind,params,macs\n");
        for l in &self.layers {
            writeln!(s, "{},{},{},{}", l.name, l.kind, l.params, l.macs).unwrap();
        }
        writeln!(s, "total,,{},{}", self.total_params(), self.total_macs()).unwrap();
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<28} {:<12} {:>12} {:>16}\n", "layer", "kind", "params", "MACs");
        for l in &self.layers {
            writeln!(s, "{:<28} {:<12} {:>12} {:>16}", l.name, l.kind, l.params, l.macs).unwrap();
        }
        writeln!(
            s,
            "{:<28} {:<12} {:>12} {:>16}  ({:.3} GMac)",
            "total",
            "",
            self.total_params(),
            self.total_macs(),
            self.total_macs() as f64 / 1e9
        )
        .unwrap();
        s
    }
}
