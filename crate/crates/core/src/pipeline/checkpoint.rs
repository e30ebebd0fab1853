//! Checkpoint file, little-endian:
//! `"HCL1" u32:version u8:stage u64:step u32:tensor_count`, then per tensor
//! `u16:name_len name u8:rank u64[rank]:dims f32[..]:data`, then the queue
//! block `u32:filled u32:dim f32[filled·dim]` (oldest row first) and the rng
//! block `u32:len bytes`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::contrast::{MemoryQueue, MomentumPair};
use crate::error::{HclError, Result};
use crate::models::{Encoder, SpatialHead};

use super::binio::{put_f32s, Reader};
use super::config::TrainConfig;
use super::optim::Sgd;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HCL1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub const QUERY_PREFIX: &str = "query.";
pub const KEY_PREFIX: &str = "key.";
pub const VELOCITY_PREFIX: &str = "sgd.";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueBlock {
    pub filled: usize,
    pub dim: usize,
    pub rows: Vec<f32>,
}

/// Position of the counter-based generators: every draw is a pure function
/// of `(seed, stream, epoch, index)`, so the seed plus the next epoch index
/// fully determine the continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub next_epoch: u64,
}

impl RngState {
    pub fn to_bytes(self) -> Vec<u8> {
        let mut v = self.seed.to_le_bytes().to_vec();
        v.extend_from_slice(&self.next_epoch.to_le_bytes());
        v
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() != 16 {
            return Err(HclError::Parse(format!("rng state block of {} bytes, expected 16", b.len())));
        }
        Ok(RngState {
            seed: u64::from_le_bytes(b[..8].try_into().unwrap()),
            next_epoch: u64::from_le_bytes(b[8..].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: u8,
    /// Optimizer steps completed over the whole run.
    pub step: u64,
    pub tensors: Vec<NamedTensor>,
    pub queue: QueueBlock,
    pub rng_state: Vec<u8>,
}

/// Everything training mutates.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub stage: u8,
    pub step: u64,
    pub pair: MomentumPair<f32>,
    pub optimizer: Sgd<f32>,
    pub queue: MemoryQueue<f32>,
    pub rng: RngState,
}

fn tensors_of(prefix: &str, enc: &Encoder<f32>, out: &mut Vec<NamedTensor>) {
    enc.visit_params(&mut |name, t| {
        out.push(NamedTensor {
            name: format!("{prefix}{name}"),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        })
    });
}

fn incompatible<T>(problems: Vec<String>) -> Result<T> {
    Err(HclError::IncompatibleCheckpoint(problems.join("; ")))
}

impl Checkpoint {
    pub fn from_state(state: &TrainState) -> Self {
        let mut tensors = Vec::new();
        tensors_of(QUERY_PREFIX, &state.pair.query, &mut tensors);
        tensors_of(KEY_PREFIX, &state.pair.key, &mut tensors);
        let mut i = 0;
        state.pair.query.visit_params(&mut |name, t| {
            tensors.push(NamedTensor {
                name: format!("{VELOCITY_PREFIX}{name}"),
                shape: t.shape().to_vec(),
                data: state.optimizer.velocity[i].clone(),
            });
            i += 1;
        });
        Checkpoint {
            stage: state.stage,
            step: state.step,
            tensors,
            queue: QueueBlock {
                filled: state.queue.len(),
                dim: state.queue.dim(),
                rows: state.queue.to_rows_oldest_first(),
            },
            rng_state: state.rng.to_bytes(),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn has_spatial(&self) -> bool {
        self.tensors
            .iter()
            .any(|t| t.name.starts_with(&format!("{QUERY_PREFIX}spatial.")))
    }

    /// Copies prefixed tensors into `enc`, listing every missing, extra or
    /// mis-shaped entry.
    fn fill_encoder(&self, prefix: &str, enc: &mut Encoder<f32>, problems: &mut Vec<String>) {
        let mut by_name: BTreeMap<&str, &NamedTensor> = self
            .tensors
            .iter()
            .filter_map(|t| t.name.strip_prefix(prefix).map(|n| (n, t)))
            .collect();
        enc.visit_params_mut(&mut |name, t| match by_name.remove(name.as_str()) {
            None => problems.push(format!("missing tensor {prefix}{name} {:?}", t.shape())),
            Some(nt) if nt.shape != t.shape() => problems.push(format!(
                "tensor {prefix}{name}: checkpoint shape {:?}, config shape {:?}",
                nt.shape,
                t.shape()
            )),
            Some(nt) => t.data_mut().copy_from_slice(&nt.data),
        });
        for extra in by_name.keys() {
            problems.push(format!("unexpected tensor {prefix}{extra}"));
        }
    }

    /// Rebuilds query/key encoders for `cfg`. The stage decides whether the
    /// spatial head is expected.
    pub fn encoders(&self, cfg: &TrainConfig) -> Result<MomentumPair<f32>> {
        let build = |with_spatial: bool| -> Result<Encoder<f32>> {
            if with_spatial {
                Encoder::heterogeneous(&cfg.model, cfg.seed)
            } else {
                Encoder::semantic_only(&cfg.model, cfg.seed)
            }
        };
        let spatial = self.stage == 2;
        let mut query = build(spatial)?;
        let mut key = build(spatial)?;
        let mut problems = Vec::new();
        self.fill_encoder(QUERY_PREFIX, &mut query, &mut problems);
        self.fill_encoder(KEY_PREFIX, &mut key, &mut problems);
        if !problems.is_empty() {
            return incompatible(problems);
        }
        MomentumPair::from_parts(query, key, cfg.key_momentum)
    }

    /// Restores the full training state of this checkpoint under `cfg`.
    pub fn restore(&self, cfg: &TrainConfig) -> Result<TrainState> {
        let pair = self.encoders(cfg)?;
        let mut optimizer = Sgd::new(cfg.sgd_momentum, cfg.weight_decay, &pair.query);
        let mut problems = Vec::new();
        let mut i = 0;
        pair.query.visit_params(&mut |name, t| {
            match self.tensor(&format!("{VELOCITY_PREFIX}{name}")) {
                Some(nt) if nt.shape == t.shape() => optimizer.velocity[i] = nt.data.clone(),
                Some(nt) => problems.push(format!(
                    "tensor {VELOCITY_PREFIX}{name}: checkpoint shape {:?}, config shape {:?}",
                    nt.shape,
                    t.shape()
                )),
                None => problems.push(format!("missing tensor {VELOCITY_PREFIX}{name}")),
            }
            i += 1;
        });
        let dim = pair.query.contrastive_dim();
        if self.queue.filled > 0 && self.queue.dim != dim {
            problems.push(format!("queue dim {} but the encoder emits {dim}", self.queue.dim));
        }
        if self.queue.filled > cfg.queue_capacity {
            problems.push(format!(
                "queue holds {} rows, queue_capacity is {}",
                self.queue.filled, cfg.queue_capacity
            ));
        }
        if !problems.is_empty() {
            return incompatible(problems);
        }
        let queue = MemoryQueue::from_rows(cfg.queue_capacity, dim, &self.queue.rows)?;
        Ok(TrainState {
            stage: self.stage,
            step: self.step,
            pair,
            optimizer,
            queue,
            rng: RngState::from_bytes(&self.rng_state)?,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.stage);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| HclError::InvalidArgument(format!("tensor name too long: {}", t.name)))?;
            if t.shape.iter().product::<usize>() != t.data.len() || t.shape.len() > u8::MAX as usize {
                return Err(HclError::Shape(format!("tensor {} has inconsistent shape", t.name)));
            }
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f32s(&mut out, &t.data);
        }
        if self.queue.rows.len() != self.queue.filled * self.queue.dim {
            return Err(HclError::Shape("queue block rows do not match filled × dim".into()));
        }
        out.extend_from_slice(&(self.queue.filled as u32).to_le_bytes());
        out.extend_from_slice(&(self.queue.dim as u32).to_le_bytes());
        put_f32s(&mut out, &self.queue.rows);
        out.extend_from_slice(&(self.rng_state.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.rng_state);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if magic != CHECKPOINT_MAGIC {
            return Err(HclError::NotACheckpoint(magic));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(HclError::UnsupportedVersion {
                kind: "checkpoint",
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let stage = r.u8("stage")?;
        if !(1..=2).contains(&stage) {
            return Err(HclError::Parse(format!("checkpoint stage tag {stage}, expected 1 or 2")));
        }
        let step = r.u64("step")?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for i in 0..count {
            let len = r.u16("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "tensor name")?)
                .map_err(|_| HclError::Parse(format!("tensor {i} name is not UTF-8")))?
                .to_string();
            let rank = r.u8("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("tensor dim")? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| HclError::Parse(format!("tensor {name} size overflows")))?;
            let data = r.f32s(numel, &format!("data of {name}"))?;
            tensors.push(NamedTensor { name, shape, data });
        }
        let filled = r.u32("queue filled")? as usize;
        let dim = r.u32("queue dim")? as usize;
        let rows = r.f32s(filled.saturating_mul(dim), "queue rows")?;
        let rng_len = r.u32("rng state length")? as usize;
        let rng_state = r.take(rng_len, "rng state")?.to_vec();
        r.finish()?;
        Ok(Checkpoint {
            stage,
            step,
            tensors,
            queue: QueueBlock { filled, dim, rows },
            rng_state,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Adds a freshly initialised spatial head to both encoders of a stage-1
/// pair; the key copy starts equal to the query and gradient-free.
pub(crate) fn attach_spatial(pair: &mut MomentumPair<f32>, cfg: &TrainConfig) -> Result<()> {
    if pair.query.has_spatial() {
        return Err(HclError::IncompatibleCheckpoint(
            "encoder already has a spatial head".into(),
        ));
    }
    let head = SpatialHead::<f32>::new(&cfg.model, cfg.seed, 1);
    let mut key_head = head.clone();
    key_head.visit_mut(&mut |_, t| {
        t.requires_grad = false;
        t.clear_grad();
    });
    pair.query.spatial = Some(head);
    pair.key.spatial = Some(key_head);
    Ok(())
}
