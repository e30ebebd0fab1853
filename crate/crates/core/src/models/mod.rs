//! Backbone, semantic and spatial heads, and the concatenated embedding.

mod config;
mod encoder;
mod layers;

pub use config::{BackboneConfig, HeadConfig, ModelConfig, SpatialFusion};
pub use encoder::{
    Backbone, BranchEmbeddings, EmbeddingPair, EmbeddingVars, Encoder, SemanticHead, SpatialHead,
    StageFeatures,
};
pub use layers::{ConvBlock, ConvLayer, LinearLayer, NormLayer};

/// Guard used by every l2 normalization in the heads.
pub const NORM_EPS: f64 = 1e-12;

/// Group-norm epsilon for every normalization layer.
pub const GN_EPS: f64 = 1e-5;
