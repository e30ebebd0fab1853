//! Two-branch contrastive learning at desk scale.
//!
//! Semantic + spatial contrastive pre-training with a
//! momentum key encoder and a FIFO memory queue, together with two offline
//! analyses of a trained encoder: IoU-binned retrieval accuracy and
//! PCA-compressed instance discrimination.
//!
//! Module map:
//!
//! - [`gradcore`]: dense tensors and a tape-based reverse-mode graph with the
//!   layer set the network needs.
//! - [`models`]: backbone (stages C2..C5), semantic head, FPN-style spatial
//!   head and the concatenated embedding.
//! - [`contrast`]: similarity, InfoNCE over a gallery, momentum update, queue.
//! - [`augment`]: view sampling, crop/resize/flip/jitter, view IoU.
//! - [`data`]: synthetic image generator, raw corpus loader, epoch batching.
//! - [`evalbench`]: PCA projection, contrastive testing protocol, reports.
//! - [`pipeline`]: configuration, two-stage training, checkpoints, embedding
//!   export.

pub mod augment;
pub mod contrast;
pub mod data;
pub mod error;
pub mod evalbench;
pub mod gradcore;
pub mod models;
pub mod pipeline;
pub mod real;
pub mod rng;

pub use error::{HclError, Result};
pub use real::Real;
