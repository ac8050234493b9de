//! Checkpoint container.
//!
//! ```text
//! "PCDK" | u32 version | u64 header length | JSON header | PCDT tensors...
//! ```
//!
//! The header lists tensor names in file order: every model parameter, then
//! `adam.m/<name>` and `adam.v/<name>` for each parameter. All integers are
//! little-endian.

use std::io::{Cursor, Read};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, PcdNet};
use super::train::{Adam, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::tensor::{io, Tensor};

const MAGIC: &[u8; 4] = b"PCDK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Random state: every stream is derived from the seed and the counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    pub seed: u64,
    pub generator: RngKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RngKind {
    Chacha8Streams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counters {
    pub step: u64,
    pub epoch: u64,
    pub adam_t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    model: ModelConfig,
    train: TrainConfig,
    rng: RngState,
    counters: Counters,
    tensors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub rng: RngState,
    pub counters: Counters,
    pub params: Vec<(String, Tensor<f32>)>,
    pub adam_m: Vec<Tensor<f32>>,
    pub adam_v: Vec<Tensor<f32>>,
}

fn ser_err(e: impl std::fmt::Display) -> Error {
    Error::Serialization(e.to_string())
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer, epoch: u64) -> Self {
        Self {
            model: t.model.config.clone(),
            train: t.config.clone(),
            rng: RngState {
                seed: t.seed,
                generator: RngKind::Chacha8Streams,
            },
            counters: Counters {
                step: t.step,
                epoch,
                adam_t: t.adam.t,
            },
            params: t.model.store.iter().map(|(n, x)| (n.to_string(), x.clone())).collect(),
            adam_m: t.adam.m.clone(),
            adam_v: t.adam.v.clone(),
        }
    }

    /// Rebuilds the model and optimiser exactly as saved.
    pub fn into_trainer(self) -> Result<Trainer> {
        let model = self.model()?;
        let mut adam = Adam::new(&model.store, self.train.beta1, self.train.beta2, self.train.eps);
        adam.t = self.counters.adam_t;
        for (slot, (src, name)) in [
            (&mut adam.m, (self.adam_m, "adam.m")),
            (&mut adam.v, (self.adam_v, "adam.v")),
        ] {
            if src.len() != slot.len() || src.iter().zip(slot.iter()).any(|(a, b)| a.shape() != b.shape()) {
                return Err(ser_err(format!("{name} moments do not match the model parameters")));
            }
            *slot = src;
        }
        let mut t = Trainer::new(model, self.train, self.rng.seed)?;
        t.adam = adam;
        t.step = self.counters.step;
        Ok(t)
    }

    /// The model with the saved parameters.
    pub fn model(&self) -> Result<PcdNet<f32>> {
        // Initial values are overwritten below; the seed is irrelevant.
        let mut model = PcdNet::new(&self.model, &mut ChaCha8Rng::seed_from_u64(0))?;
        if model.store.len() != self.params.len() {
            return Err(ser_err(format!(
                "checkpoint has {} parameters, model config expects {}",
                self.params.len(),
                model.store.len()
            )));
        }
        for (name, t) in &self.params {
            let id = model
                .store
                .find(name)
                .ok_or_else(|| ser_err(format!("unexpected parameter {name}")))?;
            model.store.set(id, t.clone())?;
        }
        Ok(model)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut names: Vec<String> = self.params.iter().map(|(n, _)| n.clone()).collect();
        let pn = names.clone();
        names.extend(pn.iter().map(|n| format!("adam.m/{n}")));
        names.extend(pn.iter().map(|n| format!("adam.v/{n}")));
        let header = Header {
            version: CHECKPOINT_VERSION,
            model: self.model.clone(),
            train: self.train.clone(),
            rng: self.rng,
            counters: self.counters,
            tensors: names,
        };
        let json = serde_json::to_vec(&header).map_err(ser_err)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self
            .params
            .iter()
            .map(|(_, t)| t)
            .chain(&self.adam_m)
            .chain(&self.adam_v)
        {
            io::write(&mut out, t)?;
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(ser_err)?;
        if &magic != MAGIC {
            return Err(ser_err("not a checkpoint file (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(ser_err)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(ser_err(format!("unsupported checkpoint version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(ser_err)?;
        let len = u64::from_le_bytes(b8) as usize;
        let start = r.position() as usize;
        let json = bytes
            .get(start..start.saturating_add(len))
            .ok_or_else(|| ser_err("truncated checkpoint header"))?;
        let header: Header = serde_json::from_slice(json).map_err(ser_err)?;
        r.set_position((start + len) as u64);
        let n = header.tensors.len();
        if !n.is_multiple_of(3) {
            return Err(ser_err("checkpoint tensor list is not params + two moment sets"));
        }
        let mut tensors = Vec::with_capacity(n);
        for name in &header.tensors {
            tensors.push(io::read::<f32>(&mut r).map_err(|e| ser_err(format!("tensor {name}: {e}")))?);
        }
        if (r.position() as usize) != bytes.len() {
            return Err(ser_err("trailing bytes after checkpoint tensors"));
        }
        let k = n / 3;
        let adam_v = tensors.split_off(2 * k);
        let adam_m = tensors.split_off(k);
        Ok(Self {
            model: header.model,
            train: header.train,
            rng: header.rng,
            counters: header.counters,
            params: header.tensors[..k].iter().cloned().zip(tensors).collect(),
            adam_m,
            adam_v,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::decode(&bytes)
    }
}
