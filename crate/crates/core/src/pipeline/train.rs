use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_view, sample_pair, sample_view, AugConfig};
use crate::contrast::{info_nce_graph, info_nce_logits, MemoryQueue, MomentumPair, Temperature};
use crate::data::{iterate_batches, Dataset, ImageRecord};
use crate::error::{HclError, Result};
use crate::gradcore::Graph;
use crate::models::Encoder;
use crate::rng::{stream_rng, Stream};

use super::checkpoint::{attach_spatial, Checkpoint, RngState, TrainState};
use super::config::TrainConfig;
use super::optim::{cosine_lr, Sgd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Optimizer step over the whole run, counted from 0.
    pub step: u64,
    pub epoch: u64,
    pub stage: u8,
    pub loss: f64,
    pub lr: f64,
    /// Fraction of the batch whose positive outscored every queue entry.
    pub top1: Option<f64>,
    pub wall_clock_s: f64,
}

impl MetricsRow {
    /// The row with its timing zeroed, for run-to-run comparisons.
    pub fn without_timing(&self) -> Self {
        MetricsRow {
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub rows: Vec<MetricsRow>,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_state(&self.state)
    }
}

pub type MetricsSink<'a> = &'a mut dyn FnMut(&MetricsRow) -> Result<()>;

/// Optimizer steps in one epoch (the final short batch counts).
pub fn steps_per_epoch(n: usize, batch_size: usize) -> u64 {
    n.div_ceil(batch_size) as u64
}

/// Fresh stage-1 state: semantic-only query encoder, its key copy, zeroed
/// optimizer buffers and an empty queue.
pub fn init_stage1(cfg: &TrainConfig) -> Result<TrainState> {
    cfg.validate()?;
    let query = Encoder::semantic_only(&cfg.model, cfg.seed)?;
    let optimizer = Sgd::new(cfg.sgd_momentum, cfg.weight_decay, &query);
    let queue = MemoryQueue::new(cfg.queue_capacity, query.contrastive_dim())?;
    Ok(TrainState {
        stage: 1,
        step: 0,
        pair: MomentumPair::new(query, cfg.key_momentum)?,
        optimizer,
        queue,
        rng: RngState {
            seed: cfg.seed,
            next_epoch: 0,
        },
    })
}

/// Empties the queue and refills it with key embeddings of randomly drawn
/// training views.
pub fn warm_queue(state: &mut TrainState, cfg: &TrainConfig, dataset: &Dataset) -> Result<()> {
    let aug = cfg.aug_config();
    let mut rng = stream_rng(cfg.seed, Stream::QueueWarm, &[state.stage as u64]);
    state.queue.clear();
    let mut keys = Vec::with_capacity(state.queue.capacity());
    for _ in 0..state.queue.capacity() {
        let rec = dataset.get(rng.gen_range(0..dataset.len()));
        let rect = sample_view(&mut rng, rec.image.height(), rec.image.width(), &aug);
        let view = apply_view(&rec.image, &rect, &aug, &mut rng)?;
        keys.push(state.pair.key.embed(&view.to_tensor())?.contrastive());
    }
    state.queue.push(&keys)
}

struct StepResult {
    loss: f64,
    top1: f64,
}

fn train_step(
    state: &mut TrainState,
    batch: &[&ImageRecord],
    aug: &AugConfig,
    cfg: &TrainConfig,
    epoch: u64,
    lr: f64,
) -> Result<StepResult> {
    let t = Temperature::new(cfg.temperature)?;
    let mut queries = Vec::with_capacity(batch.len());
    let mut keys = Vec::with_capacity(batch.len());
    for rec in batch {
        let pair = sample_pair(&rec.image, aug, cfg.seed, epoch, rec.id)?;
        keys.push(state.pair.key.embed(&pair.second.to_tensor())?.contrastive());
        queries.push(pair.first.to_tensor::<f32>());
    }
    let gallery = state.queue.snapshot();
    let mut grads: Vec<Vec<f32>> = state.optimizer.velocity.iter().map(|v| vec![0.0; v.len()]).collect();
    let (mut loss_sum, mut hits) = (0.0f64, 0usize);
    for (x, k) in queries.iter().zip(&keys) {
        let mut g = Graph::new();
        let xv = g.constant(x);
        let ev = state.pair.query.embed_vars(&mut g, xv)?;
        let kv = g.constant_vec(vec![k.len()], k.clone())?;
        let loss = info_nce_graph(&mut g, ev.contrastive, kv, &gallery, t)?;
        loss_sum += g.value(loss)[0] as f64;
        let logits = info_nce_logits(g.value(ev.contrastive), k, &gallery[..], t)?;
        if logits[1..].iter().all(|&l| logits[0] > l) {
            hits += 1;
        }
        let back = g.backward(loss)?;
        let mut i = 0;
        state.pair.query.visit_params(&mut |_, p| {
            if let Some(v) = g.bound_var(p) {
                if let Some(gv) = back.get(v) {
                    for (a, b) in grads[i].iter_mut().zip(gv) {
                        *a += *b;
                    }
                }
            }
            i += 1;
        });
    }
    let inv = 1.0 / batch.len() as f32;
    grads.iter_mut().flatten().for_each(|v| *v *= inv);
    state.optimizer.step(&mut state.pair.query, &grads, lr)?;
    state.pair.update()?;
    state.queue.push(&keys)?;
    let b = batch.len() as f64;
    Ok(StepResult {
        loss: loss_sum / b,
        top1: hits as f64 / b,
    })
}

/// Runs `epochs` cosine-annealed epochs from the state's rng position.
pub fn run_epochs(
    state: &mut TrainState,
    cfg: &TrainConfig,
    dataset: &Dataset,
    epochs: usize,
    sink: MetricsSink<'_>,
) -> Result<Vec<MetricsRow>> {
    let aug = cfg.aug_config();
    let per_epoch = steps_per_epoch(dataset.len(), cfg.batch_size);
    let total = per_epoch * epochs as u64;
    let start = Instant::now();
    let mut rows = Vec::with_capacity(total as usize);
    let mut local = 0u64;
    for _ in 0..epochs {
        let epoch = state.rng.next_epoch;
        for batch in iterate_batches(dataset, cfg.batch_size, cfg.seed, epoch) {
            let lr = cosine_lr(local, total, cfg.lr0)?;
            let res = train_step(state, &batch, &aug, cfg, epoch, lr)?;
            if !res.loss.is_finite() {
                return Err(HclError::InvalidArgument(format!(
                    "loss became {} at step {}",
                    res.loss, state.step
                )));
            }
            let row = MetricsRow {
                step: state.step,
                epoch,
                stage: state.stage,
                loss: res.loss,
                lr,
                top1: Some(res.top1),
                wall_clock_s: start.elapsed().as_secs_f64(),
            };
            sink(&row)?;
            rows.push(row);
            state.step += 1;
            local += 1;
        }
        state.rng.next_epoch += 1;
    }
    Ok(rows)
}

/// Semantic-only warm-up stage.
pub fn train_stage1(cfg: &TrainConfig, dataset: &Dataset, sink: MetricsSink<'_>) -> Result<TrainOutcome> {
    let mut state = init_stage1(cfg)?;
    check_dataset(cfg, dataset)?;
    warm_queue(&mut state, cfg, dataset)?;
    let rows = run_epochs(&mut state, cfg, dataset, cfg.stage1_epochs, sink)?;
    Ok(TrainOutcome { state, rows })
}

/// Turns a stage-1 checkpoint into the stage-2 starting state: fresh
/// spatial head, reset optimizer, queue re-warmed at the concatenated width.
pub fn init_stage2(cfg: &TrainConfig, stage1: &Checkpoint, dataset: &Dataset) -> Result<TrainState> {
    cfg.validate()?;
    check_dataset(cfg, dataset)?;
    if stage1.stage != 1 {
        return Err(HclError::IncompatibleCheckpoint(format!(
            "stage: expected a stage-1 checkpoint, found stage {}",
            stage1.stage
        )));
    }
    let mut pair = stage1.encoders(cfg)?;
    attach_spatial(&mut pair, cfg)?;
    let rng = RngState::from_bytes(&stage1.rng_state)?;
    let mut state = TrainState {
        stage: 2,
        step: stage1.step,
        optimizer: Sgd::new(cfg.sgd_momentum, cfg.weight_decay, &pair.query),
        queue: MemoryQueue::new(cfg.queue_capacity, pair.query.contrastive_dim())?,
        pair,
        rng: RngState {
            seed: cfg.seed,
            next_epoch: rng.next_epoch,
        },
    };
    warm_queue(&mut state, cfg, dataset)?;
    Ok(state)
}

/// Full two-branch stage started from a stage-1 checkpoint.
pub fn train_stage2(
    cfg: &TrainConfig,
    stage1: &Checkpoint,
    dataset: &Dataset,
    sink: MetricsSink<'_>,
) -> Result<TrainOutcome> {
    let mut state = init_stage2(cfg, stage1, dataset)?;
    let rows = run_epochs(&mut state, cfg, dataset, cfg.stage2_epochs, sink)?;
    Ok(TrainOutcome { state, rows })
}

fn check_dataset(cfg: &TrainConfig, dataset: &Dataset) -> Result<()> {
    if dataset.len() < 2 {
        return Err(HclError::InvalidArgument("training needs at least 2 images".into()));
    }
    if dataset.size() != cfg.data.size {
        return Err(HclError::Config(format!(
            "dataset images are {}px, data.size is {}",
            dataset.size(),
            cfg.data.size
        )));
    }
    Ok(())
}
