//! Two-stage training, configuration, checkpoints and embedding export.

mod binio;
mod checkpoint;
mod config;
mod export;
mod optim;
mod train;

pub use checkpoint::{
    Checkpoint, NamedTensor, QueueBlock, RngState, TrainState, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION, KEY_PREFIX, QUERY_PREFIX, VELOCITY_PREFIX,
};
pub use config::{DataConfig, EvalConfig, SourceKind, TrainConfig, CONFIG_KEYS};
pub use export::{
    embed_dataset, export_embeddings, Branch, EmbeddingTable, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use optim::{cosine_lr, Sgd};
pub use train::{
    init_stage1, init_stage2, run_epochs, steps_per_epoch, train_stage1, train_stage2,
    warm_queue, MetricsRow, MetricsSink, TrainOutcome,
};

/// Writes one JSON object per line.
pub fn write_jsonl<T: serde::Serialize>(out: &mut impl std::io::Write, row: &T) -> crate::Result<()> {
    serde_json::to_writer(&mut *out, row)?;
    out.write_all(b"\n")?;
    Ok(())
}
