//! Offline analyses of a frozen encoder: PCA compression, the rolling-gallery
//! retrieval protocol, IoU-binned accuracy and dimension sweeps.

mod pca;
mod protocol;
mod reports;

pub use pca::{covariance, fit_pca, symmetric_eigen, PcaProjector};
pub use protocol::{
    contrastive_test, encode_views, run_protocol, Features, ProtocolEvent, ProtocolOutcome,
    ViewBank, ViewEncoder, ViewInput, ViewRole,
};
pub use reports::{
    average_ranks, dim_sweep, dim_sweep_bank, iou_binned_accuracy, spearman, DimSweepReport,
    DimSweepRow, IoUBinReport, SweepMode,
};

/// Desk-scale sweep lengths.
pub const DEFAULT_SWEEP_DIMS: [usize; 3] = [8, 16, 32];
pub const DEFAULT_IOU_BINS: usize = 10;
