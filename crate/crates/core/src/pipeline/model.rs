//! PCDNet: image encoder + point encoder + blended features + deformation
//! network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blend::{blend, CameraIntrinsics, FeatureSet};
use crate::error::{config_err, dim_err, Result};
use crate::layers::{
    Activation, Bound, EncoderConfig, GraphX, ImageEncoder, Layer, Linear, ParamStore, PointEncoder, ResBlock, Residual,
};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Deformation-network family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Fc,
    ResFc,
    #[serde(rename = "graphx")]
    GraphX,
    #[serde(rename = "res_graphx")]
    ResGraphX,
    #[default]
    #[serde(rename = "up_res_graphx")]
    UpResGraphX,
    #[serde(rename = "up_res_graphx_slim")]
    UpResGraphXSlim,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Fc,
        Variant::ResFc,
        Variant::GraphX,
        Variant::ResGraphX,
        Variant::UpResGraphX,
        Variant::UpResGraphXSlim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fc => "fc",
            Variant::ResFc => "res_fc",
            Variant::GraphX => "graphx",
            Variant::ResGraphX => "res_graphx",
            Variant::UpResGraphX => "up_res_graphx",
            Variant::UpResGraphXSlim => "up_res_graphx_slim",
        }
    }

    /// Whether the network mixes points, which fixes the input point count.
    pub fn mixes_points(self) -> bool {
        !matches!(self, Variant::Fc | Variant::ResFc)
    }

    fn expands(self) -> bool {
        matches!(self, Variant::UpResGraphX | Variant::UpResGraphXSlim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Square grayscale input size.
    pub image_size: usize,
    /// Encoder channels per scale; the point MLP uses the same widths.
    pub channels: Vec<usize>,
    /// Deformation block widths.
    pub widths: Vec<usize>,
    /// Point-count multiplier per block, used by the expanding variants.
    pub expansion: Vec<usize>,
    /// Inner rank of factored GraphX transforms; dense when absent.
    pub rank: Option<usize>,
    /// Initial cloud size.
    pub points: usize,
    pub features: FeatureSet,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::default(),
            image_size: 64,
            channels: vec![16, 32, 64],
            widths: vec![96, 64, 48],
            expansion: vec![1, 1, 2],
            rank: None,
            points: 2000,
            features: FeatureSet::Full,
        }
    }
}

impl ModelConfig {
    /// Deformation widths of the full-size network.
    pub fn full_size() -> Self {
        Self {
            widths: vec![512, 256, 128],
            ..Self::default()
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            image_h: self.image_size,
            image_w: self.image_size,
            channels: self.channels.clone(),
        }
    }

    pub fn feature_width(&self) -> usize {
        self.features.width(&self.encoder())
    }

    /// Output point count for an input cloud of `points`.
    pub fn output_points(&self) -> usize {
        if self.variant.expands() {
            self.expansion.iter().product::<usize>() * self.points
        } else {
            self.points
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder().validate()?;
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(config_err!("model.widths must be nonempty and positive"));
        }
        if self.points == 0 {
            return Err(config_err!("model.points must be positive"));
        }
        if self.variant.expands() && (self.expansion.len() != self.widths.len() || self.expansion.contains(&0)) {
            return Err(config_err!(
                "model.expansion needs one positive factor per width ({} widths, got {:?})",
                self.widths.len(),
                self.expansion
            ));
        }
        Ok(())
    }
}

/// One stage of the deformation network.
#[derive(Debug, Clone)]
pub enum Stage {
    Plain(Layer),
    Residual(ResBlock),
}

impl Stage {
    fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        match self {
            Stage::Plain(l) => l.forward(g, p, x),
            Stage::Residual(b) => b.forward(g, p, x),
        }
    }

    /// Every layer of the stage, main branch first.
    pub fn layers(&self) -> Vec<&Layer> {
        match self {
            Stage::Plain(l) => vec![l],
            Stage::Residual(b) => b.main.iter().collect(),
        }
    }

    pub fn residual(&self) -> Option<&Residual> {
        match self {
            Stage::Plain(_) => None,
            Stage::Residual(b) => Some(&b.residual),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcdNet<T: Element> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub image_encoder: ImageEncoder,
    pub point_encoder: PointEncoder,
    pub stages: Vec<Stage>,
    pub head: Linear,
}

impl<T: Element> PcdNet<T> {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let enc = config.encoder();
        let mut store = ParamStore::new();
        let image_encoder = ImageEncoder::new(&mut store, &enc, rng)?;
        let point_encoder = PointEncoder::new(&mut store, &enc, rng);
        let mut d = config.feature_width();
        let mut n = config.points;
        let mut stages = Vec::with_capacity(config.widths.len());
        let relu = Activation::Relu;
        let id = Activation::Identity;
        for (i, &w) in config.widths.iter().enumerate() {
            let name = format!("deform.block{i}");
            let s = &mut store;
            let stage = match config.variant {
                Variant::Fc => Stage::Plain(Layer::Linear(Linear::new(s, &name, d, w, relu, rng))),
                Variant::GraphX => Stage::Plain(Layer::GraphX(GraphX::new(
                    s,
                    &name,
                    n,
                    n,
                    d,
                    w,
                    config.rank,
                    relu,
                    rng,
                )?)),
                _ => {
                    let n_out = if config.variant.expands() {
                        n * config.expansion[i]
                    } else {
                        n
                    };
                    let fc = Layer::Linear(Linear::new(s, &format!("{name}.fc"), d, w, relu, rng));
                    let second_name = format!("{name}.mix");
                    let second = match config.variant {
                        Variant::ResFc => Layer::Linear(Linear::new(s, &second_name, w, w, id, rng)),
                        Variant::UpResGraphXSlim => {
                            Layer::GraphX(GraphX::new_slim(s, &second_name, n, n_out, w, w, config.rank, id, rng)?)
                        }
                        _ => Layer::GraphX(GraphX::new(s, &second_name, n, n_out, w, w, config.rank, id, rng)?),
                    };
                    let res_name = format!("{name}.residual");
                    let residual = if n_out != n {
                        Residual::GraphX(GraphX::new(s, &res_name, n, n_out, d, w, config.rank, id, rng)?)
                    } else if d != w {
                        Residual::Linear(Linear::new(s, &res_name, d, w, id, rng))
                    } else {
                        Residual::Identity
                    };
                    let block = ResBlock::new(vec![fc, second], residual, n)?;
                    n = n_out;
                    Stage::Residual(block)
                }
            };
            stages.push(stage);
            d = w;
        }
        let head = Linear::new(&mut store, "deform.head", d, 3, id, rng);
        Ok(Self {
            config: config.clone(),
            store,
            image_encoder,
            point_encoder,
            stages,
            head,
        })
    }

    /// Blended per-point features `[N, D]`: the deformation network's input.
    pub fn latent(&self, g: &mut Graph<T>, p: &Bound, image: Var, cloud: Var, cam: &CameraIntrinsics) -> Result<Var> {
        let n = g.shape(cloud).first().copied().unwrap_or(0);
        if self.config.variant.mixes_points() && n != self.config.points {
            return Err(dim_err!(
                "{} model was built for {} input points, got {}",
                self.config.variant.name(),
                self.config.points,
                n
            ));
        }
        let maps = self.image_encoder.forward(g, p, image)?;
        let feats = self.point_encoder.forward(g, p, cloud)?;
        let s = self.config.image_size;
        blend(g, cloud, cam, &maps, &feats, (s, s), self.config.features)
    }

    /// Maps blended features to output coordinates `[n_out, 3]`.
    pub fn decode(&self, g: &mut Graph<T>, p: &Bound, latent: Var) -> Result<Var> {
        let mut x = latent;
        for stage in &self.stages {
            x = stage.forward(g, p, x)?;
        }
        self.head.forward(g, p, x)
    }

    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, image: Var, cloud: Var, cam: &CameraIntrinsics) -> Result<Var> {
        let z = self.latent(g, p, image, cloud, cam)?;
        self.decode(g, p, z)
    }

    /// Inference without gradient tracking.
    pub fn predict(&self, image: &Tensor<T>, cloud: &Tensor<T>, cam: &CameraIntrinsics) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let img = g.constant(image.clone());
        let c = g.constant(cloud.clone());
        let out = self.forward(&mut g, &p, img, c, cam)?;
        Ok(g.value(out).clone())
    }

    pub fn latent_value(&self, image: &Tensor<T>, cloud: &Tensor<T>, cam: &CameraIntrinsics) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let img = g.constant(image.clone());
        let c = g.constant(cloud.clone());
        let z = self.latent(&mut g, &p, img, c, cam)?;
        Ok(g.value(z).clone())
    }

    pub fn decode_value(&self, latent: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let z = g.constant(latent.clone());
        let out = self.decode(&mut g, &p, z)?;
        Ok(g.value(out).clone())
    }

    /// Learned-mixing GraphX layers with their parameter-name prefixes, in
    /// network order.
    pub fn graphx_layers(&self) -> Vec<(String, &GraphX)> {
        let mut out = Vec::new();
        for stage in &self.stages {
            for l in stage.layers() {
                if let Layer::GraphX(gx) = l {
                    out.push(gx);
                }
            }
            if let Some(Residual::GraphX(gx)) = stage.residual() {
                out.push(gx);
            }
        }
        out.into_iter()
            .filter(|gx| !gx.is_slim())
            .map(|gx| {
                let name = self.store.name(gx.bias);
                (name.trim_end_matches(".bias").to_string(), gx)
            })
            .collect()
    }

    /// `(name, L2 norm)` of every parameter tensor.
    pub fn param_norms(&self) -> Vec<(String, f64)> {
        self.store
            .iter()
            .map(|(n, t)| (n.to_string(), t.sum_sq().sqrt()))
            .collect()
    }
}

/// Random cloud whose projection covers the whole image: `(u, v)` uniform
/// over `[0, W] x [0, H]`, depth uniform in `[near, far]`, back-projected.
pub fn init_point_cloud<T: Element>(
    n: usize,
    cam: &CameraIntrinsics,
    image_shape: (usize, usize),
    rng: &mut impl Rng,
) -> Tensor<T> {
    let (h, w) = (image_shape.0 as f64, image_shape.1 as f64);
    let mut data = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let u = rng.random_range(0.0..w);
        let v = rng.random_range(0.0..h);
        let z = rng.random_range(cam.near..=cam.far);
        data.extend(cam.unproject(u, v, z).map(T::from_f64_lossy));
    }
    Tensor::new([n, 3], data).unwrap()
}
