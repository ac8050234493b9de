//! The full gradient suite: every differentiable op plus a tiny end-to-end
//! model, each on freshly drawn random inputs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check, uniform, uniform_away_from_zero, GradReport, Probe};
use crate::blend::{adain_2d_to_3d, blend, project_points, CameraIntrinsics, FeatureSet};
use crate::error::Result;
use crate::layers::{Activation, Bound, GraphX, Layer, Linear, ParamStore, ResBlock, Residual};
use crate::metrics::{chamfer, l2_penalty, NNBackend};
use crate::pipeline::{init_point_cloud, ModelConfig, PcdNet, Variant};
use crate::rng::{stream, Purpose};
use crate::tensor::{Graph, Tensor, Var};

pub const OP_TOL: f64 = 1e-4;
pub const END_TO_END_TOL: f64 = 1e-3;
const OP_TRIALS: usize = 20;
const MODEL_TRIALS: usize = 3;

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub trials: usize,
    pub tol: f64,
    /// Worst relative error over all trials.
    pub rel_error: f64,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.rel_error.is_finite() && self.rel_error < self.tol
    }
}

/// `sum(v * w)`: exercises the full Jacobian rather than its column sums.
fn weighted(g: &mut Graph<f64>, v: Var, w: &Tensor<f64>) -> Result<Var> {
    let c = g.constant(w.clone());
    let m = g.mul(v, c)?;
    Ok(g.sum(m))
}

fn probe_weights(g_shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    uniform(g_shape, -1.0, 1.0, rng)
}

fn dims(rng: &mut impl Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

type Trial = fn(&mut ChaCha8Rng) -> Result<GradReport>;

fn run(name: &str, trials: usize, tol: f64, rng: &mut ChaCha8Rng, trial: Trial) -> Result<SuiteEntry> {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let r = trial(rng)?;
        worst = if r.rel_error.is_nan() {
            f64::NAN
        } else {
            worst.max(r.rel_error)
        };
    }
    Ok(SuiteEntry {
        name: name.to_string(),
        trials,
        tol,
        rel_error: worst,
    })
}

/// Checks a unary op `f` on an input of `shape` drawn by `draw`.
fn unary(
    name: &str,
    x: Tensor<f64>,
    out_shape_of: impl Fn(&mut Graph<f64>, Var) -> Result<Var>,
    rng: &mut ChaCha8Rng,
) -> Result<GradReport> {
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let out = out_shape_of(&mut g, v)?;
    let w = probe_weights(g.shape(out), rng);
    check(name, &[x], Probe::All, rng, |g, v| {
        let out = out_shape_of(g, v[0])?;
        weighted(g, out, &w)
    })
}

fn binary(
    name: &str,
    a: Tensor<f64>,
    b: Tensor<f64>,
    op: impl Fn(&mut Graph<f64>, Var, Var) -> Result<Var>,
    rng: &mut ChaCha8Rng,
) -> Result<GradReport> {
    let mut g = Graph::new();
    let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
    let out = op(&mut g, va, vb)?;
    let w = probe_weights(g.shape(out), rng);
    check(name, &[a, b], Probe::All, rng, |g, v| {
        let out = op(g, v[0], v[1])?;
        weighted(g, out, &w)
    })
}

fn broadcast_pair(rng: &mut ChaCha8Rng) -> (Tensor<f64>, Tensor<f64>) {
    let (p, q, r) = (dims(rng, 1, 4), dims(rng, 1, 4), dims(rng, 1, 4));
    (uniform(&[p, 1, q], -1.0, 1.0, rng), uniform(&[1, r, q], -1.0, 1.0, rng))
}

fn t_matmul(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (m, k, n) = (dims(rng, 1, 5), dims(rng, 1, 5), dims(rng, 1, 5));
    let (a, b) = (uniform(&[m, k], -1.0, 1.0, rng), uniform(&[k, n], -1.0, 1.0, rng));
    binary("matmul", a, b, |g, a, b| g.matmul(a, b), rng)
}

fn t_add(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (a, b) = broadcast_pair(rng);
    binary("add", a, b, |g, a, b| g.add(a, b), rng)
}

fn t_sub(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (a, b) = broadcast_pair(rng);
    binary("sub", a, b, |g, a, b| g.sub(a, b), rng)
}

fn t_mul(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (a, b) = broadcast_pair(rng);
    binary("mul", a, b, |g, a, b| g.mul(a, b), rng)
}

fn t_div(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (a, _) = broadcast_pair(rng);
    let b = uniform_away_from_zero(&[a.shape()[2]], 2.0, 0.5, rng);
    binary("div", a, b, |g, a, b| g.div(a, b), rng)
}

fn t_scale(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let s = rng.random_range(-3.0..3.0);
    let x = uniform(&[dims(rng, 1, 6), 3], -1.0, 1.0, rng);
    unary("scale", x, move |g, v| Ok(g.scale(v, s)), rng)
}

fn t_add_scalar(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let s = rng.random_range(-3.0..3.0);
    let x = uniform(&[dims(rng, 1, 6)], -1.0, 1.0, rng);
    unary("add_scalar", x, move |g, v| Ok(g.add_scalar(v, s)), rng)
}

fn t_relu(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let x = uniform_away_from_zero(&[dims(rng, 1, 5), dims(rng, 1, 5)], 1.0, 0.01, rng);
    unary("relu", x, |g, v| Ok(g.relu(v)), rng)
}

fn t_sum(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let x = uniform(&[dims(rng, 1, 4), dims(rng, 1, 4)], -1.0, 1.0, rng);
    unary("sum", x, |g, v| Ok(g.sum(v)), rng)
}

fn random_axes(rank: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut axes: Vec<usize> = (0..rank).filter(|_| rng.random_bool(0.5)).collect();
    if axes.is_empty() {
        axes.push(rng.random_range(0..rank));
    }
    axes
}

fn t_mean(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let x = uniform(&[dims(rng, 1, 4), dims(rng, 1, 4), dims(rng, 1, 4)], -1.0, 1.0, rng);
    let axes = random_axes(3, rng);
    unary("mean", x, move |g, v| g.mean(v, &axes), rng)
}

fn t_reduce_stats(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let x = uniform(&[dims(rng, 2, 5), dims(rng, 1, 4), dims(rng, 2, 4)], -1.0, 1.0, rng);
    let axes = random_axes(3, rng);
    let axes2 = axes.clone();
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let (m, _) = g.reduce_stats(v, &axes)?;
    let w1 = probe_weights(g.shape(m), rng);
    let w2 = probe_weights(g.shape(m), rng);
    check("reduce_stats", &[x], Probe::All, rng, move |g, v| {
        let (m, s) = g.reduce_stats(v[0], &axes2)?;
        let a = weighted(g, m, &w1)?;
        let b = weighted(g, s, &w2)?;
        g.add(a, b)
    })
}

fn t_concat(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let axis = rng.random_range(0..2);
    let other = dims(rng, 1, 4);
    let shape = |rng: &mut ChaCha8Rng| {
        let d = dims(rng, 1, 4);
        if axis == 0 {
            [d, other]
        } else {
            [other, d]
        }
    };
    let (sa, sb) = (shape(rng), shape(rng));
    let (a, b) = (uniform(&sa, -1.0, 1.0, rng), uniform(&sb, -1.0, 1.0, rng));
    binary("concat", a, b, move |g, a, b| g.concat(&[a, b, a], axis), rng)
}

fn t_narrow(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (r, c) = (dims(rng, 1, 5), dims(rng, 2, 6));
    let start = rng.random_range(0..c - 1);
    let len = rng.random_range(1..=c - start);
    let x = uniform(&[r, c], -1.0, 1.0, rng);
    unary("narrow", x, move |g, v| g.narrow(v, 1, start, len), rng)
}

fn t_reshape(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (a, b) = (dims(rng, 1, 4), dims(rng, 1, 4));
    let x = uniform(&[a, b, 2], -1.0, 1.0, rng);
    unary("reshape", x, move |g, v| g.reshape(v, &[2 * b, a]), rng)
}

fn t_broadcast_to(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (a, b) = (dims(rng, 1, 4), dims(rng, 1, 4));
    let x = uniform(&[1, b], -1.0, 1.0, rng);
    unary("broadcast_to", x, move |g, v| g.broadcast_to(v, &[a, b]), rng)
}

fn t_conv2d(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (ci, co) = (dims(rng, 1, 3), dims(rng, 1, 3));
    let (h, w) = (dims(rng, 3, 7), dims(rng, 3, 7));
    let stride = rng.random_range(1..=2);
    let pad = rng.random_range(0..=1);
    let x = uniform(&[ci, h, w], -1.0, 1.0, rng);
    let k = uniform(&[co, ci, 3, 3], -1.0, 1.0, rng);
    binary("conv2d", x, k, move |g, x, k| g.conv2d(x, k, stride, pad), rng)
}

fn t_bilinear(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (c, h, w) = (dims(rng, 1, 3), dims(rng, 2, 6), dims(rng, 2, 6));
    let n = dims(rng, 1, 8);
    let map = uniform(&[c, h, w], -1.0, 1.0, rng);
    // Fractional parts stay away from the kinks at integer coordinates.
    let coords = Tensor::from_fn([n, 2], |i| {
        let extent = if i % 2 == 0 { w } else { h } as i64;
        rng.random_range(-2..=extent) as f64 + rng.random_range(0.1..0.9)
    });
    binary("bilinear_sample", map, coords, |g, m, c| g.bilinear_sample(m, c), rng)
}

fn t_chamfer(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let x = uniform(&[dims(rng, 1, 12), 3], -1.0, 1.0, rng);
    let y = uniform(&[dims(rng, 1, 12), 3], -1.0, 1.0, rng);
    check("chamfer", &[x, y], Probe::All, rng, |g, v| {
        chamfer(g, v[0], v[1], NNBackend::UniformGrid)
    })
}

fn t_l2(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let a = uniform(&[dims(rng, 1, 4), 3], -1.0, 1.0, rng);
    let b = uniform(&[dims(rng, 1, 5)], -1.0, 1.0, rng);
    check("l2_penalty", &[a, b], Probe::All, rng, |g, v| l2_penalty(g, v, 0.37))
}

/// Builds a layer into a fresh store and checks input and parameter gradients.
fn layer_check(
    name: &str,
    n_in: usize,
    d_in: usize,
    rng: &mut ChaCha8Rng,
    build: impl Fn(&mut ParamStore<f64>, &mut ChaCha8Rng) -> Result<Layer2>,
) -> Result<GradReport> {
    let mut store = ParamStore::new();
    let layer = build(&mut store, rng)?;
    // Randomise zero-initialised biases as well.
    for t in store.tensors_mut() {
        *t = uniform(t.shape(), -0.5, 0.5, rng);
    }
    let x = uniform(&[n_in, d_in], -1.0, 1.0, rng);
    let mut inputs = vec![x];
    inputs.extend(store.iter().map(|(_, t)| t.clone()));
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let xv = g.constant(inputs[0].clone());
    let out = layer.forward(&mut g, &p, xv)?;
    let w = probe_weights(g.shape(out), rng);
    check(name, &inputs, Probe::All, rng, |g, v| {
        let p = Bound::new(v[1..].to_vec());
        let out = layer.forward(g, &p, v[0])?;
        weighted(g, out, &w)
    })
}

/// A GraphX or residual block under test.
enum Layer2 {
    Plain(Layer),
    Res(ResBlock),
}

impl Layer2 {
    fn forward(&self, g: &mut Graph<f64>, p: &Bound, x: Var) -> Result<Var> {
        match self {
            Layer2::Plain(l) => l.forward(g, p, x),
            Layer2::Res(b) => b.forward(g, p, x),
        }
    }
}

fn t_linear(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (n, di, dout) = (dims(rng, 1, 6), dims(rng, 1, 5), dims(rng, 1, 5));
    layer_check("linear", n, di, rng, move |s, r| {
        Ok(Layer2::Plain(Layer::Linear(Linear::new(
            s,
            "fc",
            di,
            dout,
            Activation::Identity,
            r,
        ))))
    })
}

fn t_graphx(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (ni, no, di, dout) = (dims(rng, 1, 6), dims(rng, 1, 8), dims(rng, 1, 5), dims(rng, 1, 5));
    layer_check("graphx", ni, di, rng, move |s, r| {
        Ok(Layer2::Plain(Layer::GraphX(GraphX::new(
            s,
            "gx",
            ni,
            no,
            di,
            dout,
            None,
            Activation::Identity,
            r,
        )?)))
    })
}

fn t_graphx_factored(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (ni, no, di, dout) = (dims(rng, 1, 6), dims(rng, 1, 8), dims(rng, 3, 8), dims(rng, 1, 5));
    let k = rng.random_range(1..=(di - 1) / 2);
    layer_check("graphx_factored", ni, di, rng, move |s, r| {
        Ok(Layer2::Plain(Layer::GraphX(GraphX::new(
            s,
            "gx",
            ni,
            no,
            di,
            dout,
            Some(k),
            Activation::Identity,
            r,
        )?)))
    })
}

fn t_graphx_slim(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (ni, no, di, dout) = (dims(rng, 1, 6), dims(rng, 1, 8), dims(rng, 1, 5), dims(rng, 1, 5));
    layer_check("graphx_slim", ni, di, rng, move |s, r| {
        Ok(Layer2::Plain(Layer::GraphX(GraphX::new_slim(
            s,
            "gx",
            ni,
            no,
            di,
            dout,
            None,
            Activation::Identity,
            r,
        )?)))
    })
}

fn t_res_graphx(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (n, di, w) = (dims(rng, 1, 5), dims(rng, 1, 4), dims(rng, 1, 4));
    let no = n * rng.random_range(1..=2);
    layer_check("up_res_graphx", n, di, rng, move |s, r| {
        let id = Activation::Identity;
        let fc = Layer::Linear(Linear::new(s, "fc", di, w, id, r));
        let mix = Layer::GraphX(GraphX::new(s, "mix", n, no, w, w, None, id, r)?);
        let res = Residual::GraphX(GraphX::new(s, "res", n, no, di, w, None, id, r)?);
        Ok(Layer2::Res(ResBlock::new(vec![fc, mix], res, n)?))
    })
}

fn t_adain(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let (c, h, w, n) = (dims(rng, 1, 3), dims(rng, 1, 4), dims(rng, 2, 4), dims(rng, 2, 6));
    let map = uniform(&[c, h, w], -1.0, 1.0, rng);
    let pts = uniform(&[n, c], -1.0, 1.0, rng);
    binary("adain_2d_to_3d", map, pts, adain_2d_to_3d, rng)
}

fn cloud(n: usize, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn([n, 3], |i| {
        if i % 3 == 2 {
            rng.random_range(1.5..3.0)
        } else {
            rng.random_range(-0.8..0.8)
        }
    })
}

fn t_project(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let c = cloud(dims(rng, 1, 8), rng);
    let cam = CameraIntrinsics::for_image(16, 16);
    unary(
        "project_points",
        c,
        move |g, v| project_points(g, v, &cam, (8, 4), (16, 16)),
        rng,
    )
}

fn t_blend(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let n = dims(rng, 2, 6);
    let cam = CameraIntrinsics::for_image(16, 16);
    let inputs = vec![
        cloud(n, rng),
        uniform(&[2, 8, 8], -1.0, 1.0, rng),
        uniform(&[3, 4, 4], -1.0, 1.0, rng),
        uniform(&[n, 2], -1.0, 1.0, rng),
        uniform(&[n, 3], -1.0, 1.0, rng),
    ];
    let mut g = Graph::new();
    let v: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = blend(&mut g, v[0], &cam, &v[1..3], &v[3..5], (16, 16), FeatureSet::Full)?;
    let w = probe_weights(g.shape(out), rng);
    check("blend", &inputs, Probe::All, rng, |g, v| {
        let out = blend(g, v[0], &cam, &v[1..3], &v[3..5], (16, 16), FeatureSet::Full)?;
        weighted(g, out, &w)
    })
}

/// Tiny end-to-end configuration: two scales, deformation widths 16 and 8,
/// 32 input points.
pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        variant: Variant::UpResGraphX,
        image_size: 16,
        channels: vec![4, 8],
        widths: vec![16, 8],
        expansion: vec![1, 2],
        rank: None,
        points: 32,
        features: FeatureSet::Full,
    }
}

fn t_end_to_end(rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let cfg = tiny_model_config();
    let mut model = PcdNet::<f64>::new(&cfg, rng)?;
    for t in model.store.tensors_mut() {
        if t.data().iter().all(|&x| x == 0.0) {
            *t = uniform(t.shape(), -0.1, 0.1, rng);
        }
    }
    let cam = CameraIntrinsics::for_image(16, 16);
    let image = uniform(&[1, 16, 16], 0.0, 1.0, rng);
    let init = init_point_cloud(cfg.points, &cam, (16, 16), rng);
    let gt = cloud(24, rng);
    let params: Vec<Tensor<f64>> = model.store.iter().map(|(_, t)| t.clone()).collect();
    check("end_to_end", &params, Probe::Sample(4), rng, |g, v| {
        let p = Bound::new(v.to_vec());
        let img = g.constant(image.clone());
        let c = g.constant(init.clone());
        let y = g.constant(gt.clone());
        let out = model.forward(g, &p, img, c, &cam)?;
        let cd = chamfer(g, out, y, NNBackend::UniformGrid)?;
        let l2 = l2_penalty(g, v, 1e-2)?;
        g.add(cd, l2)
    })
}

/// Runs every check; the same `seed` reproduces the same inputs.
pub fn suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut rng = stream(seed, Purpose::Check, 0);
    let ops: [(&str, Trial); 27] = [
        ("matmul", t_matmul),
        ("add", t_add),
        ("sub", t_sub),
        ("mul", t_mul),
        ("div", t_div),
        ("scale", t_scale),
        ("add_scalar", t_add_scalar),
        ("relu", t_relu),
        ("sum", t_sum),
        ("mean", t_mean),
        ("reduce_stats", t_reduce_stats),
        ("concat", t_concat),
        ("narrow", t_narrow),
        ("reshape", t_reshape),
        ("broadcast_to", t_broadcast_to),
        ("conv2d", t_conv2d),
        ("bilinear_sample", t_bilinear),
        ("chamfer", t_chamfer),
        ("l2_penalty", t_l2),
        ("linear", t_linear),
        ("graphx", t_graphx),
        ("graphx_factored", t_graphx_factored),
        ("graphx_slim", t_graphx_slim),
        ("up_res_graphx", t_res_graphx),
        ("adain_2d_to_3d", t_adain),
        ("project_points", t_project),
        ("blend", t_blend),
    ];
    let mut out = Vec::with_capacity(ops.len() + 1);
    for (name, f) in ops {
        out.push(run(name, OP_TRIALS, OP_TOL, &mut rng, f)?);
    }
    out.push(run("end_to_end", MODEL_TRIALS, END_TO_END_TOL, &mut rng, t_end_to_end)?);
    Ok(out)
}
