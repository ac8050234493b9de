//! Image encoder (plain conv stack, no skip connections) and the per-point
//! MLP encoder whose scale widths match the image channels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{kaiming_uniform, Activation, Bound, Linear, ParamId, ParamStore};
use crate::error::{config_err, dim_err, Result};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Multi-scale encoder geometry. Scale `i` (0-based) has `channels[i]`
/// channels at `image / 2^(i+1)` resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub channels: Vec<usize>,
}

impl EncoderConfig {
    pub fn desk(image_size: usize) -> Self {
        Self {
            image_h: image_size,
            image_w: image_size,
            channels: vec![16, 32, 64],
        }
    }

    pub fn scales(&self) -> usize {
        self.channels.len()
    }

    pub fn map_shape(&self, scale: usize) -> (usize, usize) {
        (self.image_h >> (scale + 1), self.image_w >> (scale + 1))
    }

    pub fn channel_sum(&self) -> usize {
        self.channels.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.scales();
        if s == 0 || self.channels.contains(&0) {
            return Err(config_err!("encoder needs at least one scale with nonzero channels"));
        }
        let div = 1usize << s;
        if self.image_h == 0
            || self.image_w == 0
            || !self.image_h.is_multiple_of(div)
            || !self.image_w.is_multiple_of(div)
        {
            return Err(config_err!(
                "image size {}x{} must be divisible by {} for {} scales",
                self.image_h,
                self.image_w,
                div,
                s
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Conv {
    weight: ParamId,
    bias: ParamId,
    stride: usize,
}

/// Per scale: a stride-2 3x3 conv that halves the resolution, then a
/// stride-1 3x3 conv; each followed by the activation.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    pub config: EncoderConfig,
    pub activation: Activation,
    convs: Vec<[Conv; 2]>,
}

impl ImageEncoder {
    pub fn new<T: Element>(store: &mut ParamStore<T>, config: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut c_prev = 1;
        let mut convs = Vec::new();
        for (i, &c) in config.channels.iter().enumerate() {
            let mut make = |j: usize, c_in: usize, stride: usize| Conv {
                weight: store.add(
                    format!("image.scale{i}.conv{j}.weight"),
                    kaiming_uniform(&[c, c_in, 3, 3], c_in * 9, rng),
                ),
                bias: store.add(format!("image.scale{i}.conv{j}.bias"), Tensor::zeros([c, 1, 1])),
                stride,
            };
            let down = make(0, c_prev, 2);
            let same = make(1, c, 1);
            convs.push([down, same]);
            c_prev = c;
        }
        Ok(Self {
            config: config.clone(),
            activation: Activation::Relu,
            convs,
        })
    }

    /// Encodes a `[1, H, W]` grayscale image into one map per scale.
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Bound, img: Var) -> Result<Vec<Var>> {
        let s = g.shape(img);
        if s != [1, self.config.image_h, self.config.image_w] {
            return Err(dim_err!(
                "image encoder expects [1, {}, {}], got {:?}",
                self.config.image_h,
                self.config.image_w,
                s
            ));
        }
        let mut x = img;
        let mut maps = Vec::with_capacity(self.convs.len());
        for pair in &self.convs {
            for conv in pair {
                let y = g.conv2d(x, p[conv.weight], conv.stride, 1)?;
                let y = g.add(y, p[conv.bias])?;
                x = self.activation.apply(g, y);
            }
            maps.push(x);
        }
        Ok(maps)
    }

    /// `(c_out, c_in, out_h, out_w)` of every conv, in order.
    pub fn conv_shapes(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        let mut c_prev = 1;
        for (i, &c) in self.config.channels.iter().enumerate() {
            let (h, w) = self.config.map_shape(i);
            out.push((c, c_prev, h, w));
            out.push((c, c, h, w));
            c_prev = c;
        }
        out
    }
}

/// Shared-weight MLP over points; block `i` maps to `channels[i]` features.
#[derive(Debug, Clone)]
pub struct PointEncoder {
    pub blocks: Vec<Linear>,
}

impl PointEncoder {
    pub fn new<T: Element>(store: &mut ParamStore<T>, config: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let mut d = 3;
        let blocks = config
            .channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let l = Linear::new(store, &format!("points.block{i}"), d, c, Activation::Relu, rng);
                d = c;
                l
            })
            .collect();
        Self { blocks }
    }

    /// Per-scale point features for `cloud: [N, 3]`.
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Bound, cloud: Var) -> Result<Vec<Var>> {
        let s = g.shape(cloud);
        if s.len() != 2 || s[1] != 3 {
            return Err(dim_err!("point encoder expects [N, 3], got {:?}", s));
        }
        let mut x = cloud;
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            x = b.forward(g, p, x)?;
            out.push(x);
        }
        Ok(out)
    }
}
