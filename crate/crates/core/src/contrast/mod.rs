//! Contrastive objective: similarity, InfoNCE against a gallery, the momentum
//! key encoder, and the FIFO memory queue.

mod loss;
mod momentum;
mod queue;

pub use loss::{info_nce_graph, info_nce_logits, info_nce_loss, info_nce_loss_rows, similarity, Temperature};
pub use momentum::{momentum_update, MomentumPair};
pub use queue::MemoryQueue;
