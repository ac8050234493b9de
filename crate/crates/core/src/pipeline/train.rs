//! Adam training loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{init_point_cloud, PcdNet};
use crate::data::Sample;
use crate::error::{config_err, Error, Result};
use crate::layers::ParamStore;
use crate::metrics::{chamfer, l2_penalty, NNBackend};
use crate::rng::{stream, Purpose};
use crate::tensor::{Element, Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplier applied at each milestone.
    pub lr_decay: f64,
    /// Epoch indices (0-based) at which the decay applies. Defaults to
    /// `floor(0.5 * epochs)` and `floor(0.8 * epochs)`.
    pub milestones: Option<Vec<usize>>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optional cap on the total number of steps.
    pub max_steps: Option<u64>,
    pub nn: NNBackend,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            lr_decay: 0.3,
            milestones: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 1e-5,
            batch_size: 4,
            epochs: 10,
            max_steps: None,
            nn: NNBackend::UniformGrid,
        }
    }
}

impl TrainConfig {
    pub fn milestones(&self) -> Vec<usize> {
        self.milestones.clone().unwrap_or_else(|| {
            vec![
                (self.epochs as f64 * 0.5).floor() as usize,
                (self.epochs as f64 * 0.8).floor() as usize,
            ]
        })
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let hits = self.milestones().iter().filter(|&&m| epoch >= m).count();
        self.lr * self.lr_decay.powi(hits as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.lr, self.l2, self.eps];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(config_err!(
                "train.lr, train.l2 and train.eps must be finite and nonnegative"
            ));
        }
        if self.lr_decay.is_nan()
            || self.lr_decay <= 0.0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(config_err!(
                "train.lr_decay must be positive and betas must lie in [0, 1)"
            ));
        }
        if self.batch_size == 0 {
            return Err(config_err!("train.batch_size must be positive"));
        }
        if let Some(m) = self
            .milestones
            .as_ref()
            .and_then(|ms| ms.iter().find(|&&m| m > self.epochs))
        {
            return Err(config_err!("milestone {m} lies beyond {} epochs", self.epochs));
        }
        Ok(())
    }
}

/// Adam with bias correction; moments are kept per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T: Element> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(store: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || store.iter().map(|(_, t)| Tensor::zeros(t.shape().to_vec())).collect();
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>], lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (T::from_f64_lossy(self.beta1), T::from_f64_lossy(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::from_f64_lossy(1.0 - self.beta1.powi(t));
        let bc2 = T::from_f64_lossy(1.0 - self.beta2.powi(t));
        let lr = T::from_f64_lossy(lr);
        let eps = T::from_f64_lossy(self.eps);
        for (((p, g), m), v) in store.tensors_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + c1 * gi;
                v[i] = b2 * v[i] + c2 * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] = p[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub chamfer: f32,
    pub l2: f32,
    pub total: f32,
}

pub const LOSS_CSV_HEADER: &str = "step,epoch,lr,chamfer,l2,total";

impl StepRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.epoch, self.lr, self.chamfer, self.l2, self.total
        )
    }
}

/// Training state. Everything random is derived from `seed` and `step`.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: PcdNet<f32>,
    pub adam: Adam<f32>,
    pub config: TrainConfig,
    pub seed: u64,
    /// Completed steps.
    pub step: u64,
}

impl Trainer {
    pub fn new(model: PcdNet<f32>, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(&model.store, config.beta1, config.beta2, config.eps);
        Ok(Self {
            model,
            adam,
            config,
            seed,
            step: 0,
        })
    }

    pub fn steps_per_epoch(&self, n_train: usize) -> u64 {
        n_train.div_ceil(self.config.batch_size) as u64
    }

    pub fn total_steps(&self, n_train: usize) -> u64 {
        let full = self.config.epochs as u64 * self.steps_per_epoch(n_train);
        self.config.max_steps.map_or(full, |m| m.min(full))
    }

    pub fn epoch_of(&self, step: u64, n_train: usize) -> usize {
        (step / self.steps_per_epoch(n_train).max(1)) as usize
    }

    /// Training-set indices used by 0-based step `step`.
    pub fn batch_indices(&self, step: u64, n_train: usize) -> Vec<usize> {
        let spe = self.steps_per_epoch(n_train);
        let epoch = step / spe;
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut stream(self.seed, Purpose::Shuffle, epoch));
        let b = self.config.batch_size;
        let start = (step % spe) as usize * b;
        order[start..(start + b).min(n_train)].to_vec()
    }

    /// Runs one optimisation step over the next batch.
    pub fn step(&mut self, train: &[&Sample]) -> Result<StepRecord> {
        if train.is_empty() {
            return Err(config_err!("training split is empty"));
        }
        let n = train.len();
        let epoch = self.epoch_of(self.step, n);
        let lr = self.config.lr_at_epoch(epoch);
        let batch = self.batch_indices(self.step, n);
        let model = &self.model;
        let mut g = Graph::new();
        let p = model.store.bind(&mut g, true);
        let mut sum: Option<Var> = None;
        for (b, &i) in batch.iter().enumerate() {
            let s = train[i];
            let mut rng = stream(
                self.seed,
                Purpose::TrainCloud,
                self.step * self.config.batch_size as u64 + b as u64,
            );
            let size = model.config.image_size;
            let cloud = init_point_cloud(model.config.points, &s.cam, (size, size), &mut rng);
            let img = g.constant(s.image.clone());
            let c = g.constant(cloud);
            let gt = g.constant(s.cloud.clone());
            let out = model.forward(&mut g, &p, img, c, &s.cam)?;
            let cd = chamfer(&mut g, out, gt, self.config.nn)?;
            sum = Some(match sum {
                Some(acc) => g.add(acc, cd)?,
                None => cd,
            });
        }
        let cd = g.scale(sum.expect("nonempty batch"), 1.0 / batch.len() as f32);
        let l2 = l2_penalty(&mut g, p.vars(), self.config.l2)?;
        let total = g.add(cd, l2)?;
        let record = StepRecord {
            step: self.step + 1,
            epoch,
            lr,
            chamfer: g.value(cd).item(),
            l2: g.value(l2).item(),
            total: g.value(total).item(),
        };
        if !record.total.is_finite() {
            return Err(Error::NonFinite {
                step: record.step,
                detail: self.divergence_report(&record),
            });
        }
        g.backward(total)?;
        let grads: Vec<Tensor<f32>> = p
            .vars()
            .iter()
            .map(|&v| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.shape(v).to_vec())))
            .collect();
        self.adam.step(&mut self.model.store, &grads, lr);
        self.step += 1;
        Ok(record)
    }

    fn divergence_report(&self, r: &StepRecord) -> String {
        let mut s = format!("chamfer {} l2 {} total {}; parameter norms:", r.chamfer, r.l2, r.total);
        for (name, norm) in self.model.param_norms() {
            write!(s, " {name}={norm:.4e}").unwrap();
        }
        s
    }

    /// Steps until `until` completed steps, calling `on_step` after each.
    pub fn run(
        &mut self,
        train: &[&Sample],
        until: u64,
        mut on_step: impl FnMut(&Trainer, &StepRecord) -> Result<()>,
    ) -> Result<()> {
        while self.step < until {
            let r = self.step(train)?;
            on_step(self, &r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_milestones_follow_epochs() {
        let c = TrainConfig::default();
        assert_eq!(c.milestones(), vec![5, 8]);
        assert_eq!(c.lr_at_epoch(4), 5e-5);
        assert!((c.lr_at_epoch(5) - 1.5e-5).abs() < 1e-20);
        assert!((c.lr_at_epoch(9) - 4.5e-6).abs() < 1e-20);
        let c = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        assert_eq!(c.milestones(), vec![10, 16]);
    }

    #[test]
    fn adam_with_zero_gradient_keeps_parameters() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::new([3], vec![1.0, -2.0, 0.5]).unwrap());
        let before = store.clone();
        let mut adam = Adam::new(&store, 0.9, 0.999, 1e-8);
        for _ in 0..5 {
            adam.step(&mut store, &[Tensor::zeros([3])], 1e-2);
        }
        assert_eq!(store.iter().next().unwrap().1, before.iter().next().unwrap().1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::<f64>::new();
        store.add("w", Tensor::new([2], vec![1.0, 1.0]).unwrap());
        let mut adam = Adam::new(&store, 0.9, 0.999, 1e-8);
        adam.step(&mut store, &[Tensor::new([2], vec![3.0, -0.5]).unwrap()], 0.1);
        let w = store.iter().next().unwrap().1.data().to_vec();
        assert!((w[0] - 0.9).abs() < 1e-7 && (w[1] - 1.1).abs() < 1e-7);
    }

    #[test]
    fn milestone_past_end_is_rejected() {
        let c = TrainConfig {
            milestones: Some(vec![3, 12]),
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
