use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{invalid, shape_err, Result};
use crate::gradcore::{Graph, Tensor, Var};
use crate::real::{lit, Real};
use crate::rng::{stream_rng, Stream};

use super::config::{ModelConfig, SpatialFusion};
use super::layers::{ConvBlock, ConvLayer, LinearLayer};
use super::NORM_EPS;

/// Backbone outputs C2..C5 of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct StageFeatures {
    pub c2: Var,
    pub c3: Var,
    pub c4: Var,
    pub c5: Var,
}

impl StageFeatures {
    pub fn as_array(&self) -> [Var; 4] {
        [self.c2, self.c3, self.c4, self.c5]
    }
}

/// Nodes produced by [`Encoder::embed_vars`].
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingVars {
    pub features: StageFeatures,
    pub semantic: Var,
    pub spatial: Option<Var>,
    /// What enters the contrastive loss: the semantic vector alone, or
    /// `[semantic ∥ spatial]` when the spatial head is present.
    pub contrastive: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair<T> {
    pub semantic: Vec<T>,
    pub spatial: Vec<T>,
    pub concat: Vec<T>,
}

/// Per-branch embeddings; `spatial` is absent for a semantic-only encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchEmbeddings<T> {
    pub semantic: Vec<T>,
    pub spatial: Option<Vec<T>>,
}

impl<T: Real> BranchEmbeddings<T> {
    pub fn contrastive(&self) -> Vec<T> {
        let mut v = self.semantic.clone();
        if let Some(s) = &self.spatial {
            v.extend_from_slice(s);
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct Backbone<T> {
    pub stem: ConvBlock<T>,
    pub stages: [Vec<ConvBlock<T>>; 4],
}

impl<T: Real> Backbone<T> {
    fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let b = &cfg.backbone;
        let groups = b.group_norm_groups;
        let mut rng = stream_rng(seed, Stream::Init, &[0]);
        let stem = ConvBlock::new(&mut rng, 3, b.stage_channels[0], 2, groups);
        let mut c_in = b.stage_channels[0];
        let stages = std::array::from_fn(|s| {
            let c_out = b.stage_channels[s];
            (0..b.blocks_per_stage[s])
                .map(|i| {
                    let stride = if s > 0 && i == 0 { 2 } else { 1 };
                    let blk = ConvBlock::new(&mut rng, c_in, c_out, stride, groups);
                    c_in = c_out;
                    blk
                })
                .collect()
        });
        Backbone { stem, stages }
    }

    /// Stem (conv stride 2, then 2×2 average pool) and four stages.
    pub fn forward(&self, g: &mut Graph<T>, image: Var) -> Result<StageFeatures> {
        let x = self.stem.forward(g, image)?;
        let mut x = g.avg_pool2d(x, 2, 2)?;
        let mut outs = [x; 4];
        for (s, blocks) in self.stages.iter().enumerate() {
            for blk in blocks {
                x = blk.forward(g, x)?;
            }
            outs[s] = x;
        }
        Ok(StageFeatures {
            c2: outs[0],
            c3: outs[1],
            c4: outs[2],
            c5: outs[3],
        })
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.stem.visit("backbone.stem", f);
        for (s, blocks) in self.stages.iter().enumerate() {
            for (i, blk) in blocks.iter().enumerate() {
                blk.visit(&format!("backbone.c{}.{i}", s + 2), f);
            }
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.stem.visit_mut("backbone.stem", f);
        for (s, blocks) in self.stages.iter_mut().enumerate() {
            for (i, blk) in blocks.iter_mut().enumerate() {
                blk.visit_mut(&format!("backbone.c{}.{i}", s + 2), f);
            }
        }
    }
}

/// Global average pool of C5 → linear → relu → linear → l2 normalize.
#[derive(Debug, Clone)]
pub struct SemanticHead<T> {
    pub fc1: LinearLayer<T>,
    pub fc2: LinearLayer<T>,
}

impl<T: Real> SemanticHead<T> {
    fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Init, &[1]);
        let c5 = cfg.backbone.stage_channels[3];
        SemanticHead {
            fc1: LinearLayer::new(&mut rng, c5, cfg.head.hidden_sem),
            fc2: LinearLayer::new(&mut rng, cfg.head.hidden_sem, cfg.head.d_sem),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, feats: &StageFeatures) -> Result<Var> {
        let pooled = g.global_avg_pool(feats.c5)?;
        let h = self.fc1.forward(g, pooled)?;
        let h = g.relu(h);
        let z = self.fc2.forward(g, h)?;
        g.l2_normalize(z, lit(NORM_EPS))
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.fc1.visit("semantic.fc1", f);
        self.fc2.visit("semantic.fc2", f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.fc1.visit_mut("semantic.fc1", f);
        self.fc2.visit_mut("semantic.fc2", f);
    }
}

/// FPN-style fusion of C2..C5 into a normalized `R²` vector.
#[derive(Debug, Clone)]
pub struct SpatialHead<T> {
    /// 1×1 lateral convolutions for C2..C5.
    pub laterals: [ConvLayer<T>; 4],
    /// 1×1 convolution from the fused map to a single channel.
    pub reduce: ConvLayer<T>,
    pub spatial_res: usize,
    pub fusion: SpatialFusion,
}

impl<T: Real> SpatialHead<T> {
    /// Fresh head drawn from the init stream for `(seed, generation)`.
    pub fn new(cfg: &ModelConfig, seed: u64, generation: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Init, &[2, generation]);
        let fpn = cfg.head.fpn_channels;
        let laterals = std::array::from_fn(|s| {
            ConvLayer::new(&mut rng, cfg.backbone.stage_channels[s], fpn, 1, 1, true)
        });
        SpatialHead {
            laterals,
            reduce: ConvLayer::new(&mut rng, fpn, 1, 1, 1, true),
            spatial_res: cfg.head.spatial_res,
            fusion: cfg.head.fusion,
        }
    }

    /// Lateral projections L2..L5.
    pub fn lateral_maps(&self, g: &mut Graph<T>, feats: &StageFeatures) -> Result<[Var; 4]> {
        let c = feats.as_array();
        Ok([
            self.laterals[0].forward(g, c[0])?,
            self.laterals[1].forward(g, c[1])?,
            self.laterals[2].forward(g, c[2])?,
            self.laterals[3].forward(g, c[3])?,
        ])
    }

    /// Top-down pathway and fusion from given lateral maps to the unit vector.
    pub fn fuse(&self, g: &mut Graph<T>, laterals: [Var; 4]) -> Result<Var> {
        // P5 = L5, P(i) = L(i) + up(P(i+1)).
        let mut merged = laterals;
        for i in (0..3).rev() {
            let up = g.upsample_nearest2x(merged[i + 1])?;
            if g.shape(up) != g.shape(laterals[i]) {
                return shape_err(format!(
                    "top-down merge of {:?} into {:?}",
                    g.shape(up),
                    g.shape(laterals[i])
                ));
            }
            merged[i] = g.add(laterals[i], up)?;
        }
        let r = self.spatial_res;
        let fused = match self.fusion {
            SpatialFusion::Pooled => {
                let mut acc: Option<Var> = None;
                for p in merged {
                    let at_r = resample_to(g, p, r)?;
                    acc = Some(match acc {
                        Some(a) => g.add(a, at_r)?,
                        None => at_r,
                    });
                }
                acc.expect("four paths")
            }
            SpatialFusion::Vanilla => {
                let full = g.shape(merged[0])[1];
                let mut acc = merged[0];
                for &p in &merged[1..] {
                    let up = resample_to(g, p, full)?;
                    acc = g.add(acc, up)?;
                }
                resample_to(g, acc, r)?
            }
        };
        let one = self.reduce.forward(g, fused)?;
        let flat = g.reshape(one, vec![r * r])?;
        g.l2_normalize(flat, lit(NORM_EPS))
    }

    pub fn forward(&self, g: &mut Graph<T>, feats: &StageFeatures) -> Result<Var> {
        let lat = self.lateral_maps(g, feats)?;
        self.fuse(g, lat)
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (i, l) in self.laterals.iter().enumerate() {
            l.visit(&format!("spatial.lateral{}", i + 2), f);
        }
        self.reduce.visit("spatial.reduce", f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for (i, l) in self.laterals.iter_mut().enumerate() {
            l.visit_mut(&format!("spatial.lateral{}", i + 2), f);
        }
        self.reduce.visit_mut("spatial.reduce", f);
    }
}

/// Average-pools or nearest-upsamples a square map to side `target`.
fn resample_to<T: Real>(g: &mut Graph<T>, x: Var, target: usize) -> Result<Var> {
    let side = g.shape(x)[1];
    if side == target {
        Ok(x)
    } else if side > target {
        if side % target != 0 {
            return shape_err(format!("cannot pool {side} down to {target}"));
        }
        let w = side / target;
        g.avg_pool2d(x, w, w)
    } else {
        if target % side != 0 || !(target / side).is_power_of_two() {
            return shape_err(format!("cannot upsample {side} to {target}"));
        }
        let mut y = x;
        while g.shape(y)[1] < target {
            y = g.upsample_nearest2x(y)?;
        }
        Ok(y)
    }
}

/// Backbone plus heads. The spatial head is absent during the semantic-only
/// warm-up stage.
#[derive(Debug)]
pub struct Encoder<T> {
    pub config: ModelConfig,
    pub backbone: Backbone<T>,
    pub semantic: SemanticHead<T>,
    pub spatial: Option<SpatialHead<T>>,
    backbone_passes: AtomicU64,
}

impl<T: Real> Clone for Encoder<T> {
    fn clone(&self) -> Self {
        Encoder {
            config: self.config.clone(),
            backbone: self.backbone.clone(),
            semantic: self.semantic.clone(),
            spatial: self.spatial.clone(),
            backbone_passes: AtomicU64::new(0),
        }
    }
}

impl<T: Real> Encoder<T> {
    /// Semantic-only encoder (backbone + semantic head).
    pub fn semantic_only(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Encoder {
            config: config.clone(),
            backbone: Backbone::new(config, seed),
            semantic: SemanticHead::new(config, seed),
            spatial: None,
            backbone_passes: AtomicU64::new(0),
        })
    }

    /// Full two-branch encoder.
    pub fn heterogeneous(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut e = Self::semantic_only(config, seed)?;
        e.spatial = Some(SpatialHead::new(config, seed, 0));
        Ok(e)
    }

    pub fn has_spatial(&self) -> bool {
        self.spatial.is_some()
    }

    /// Length of the vector that enters the contrastive loss.
    pub fn contrastive_dim(&self) -> usize {
        if self.has_spatial() {
            self.config.head.concat_dim()
        } else {
            self.config.head.d_sem
        }
    }

    /// Number of backbone forward passes run so far.
    pub fn backbone_passes(&self) -> u64 {
        self.backbone_passes.load(Ordering::Relaxed)
    }

    pub fn backbone_forward(&self, g: &mut Graph<T>, image: Var) -> Result<StageFeatures> {
        let s = self.config.backbone.input_size;
        if g.shape(image) != [3, s, s] {
            return invalid(format!(
                "encoder expects a [3, {s}, {s}] image, got {:?}",
                g.shape(image)
            ));
        }
        self.backbone_passes.fetch_add(1, Ordering::Relaxed);
        self.backbone.forward(g, image)
    }

    pub fn semantic_embed(&self, g: &mut Graph<T>, feats: &StageFeatures) -> Result<Var> {
        self.semantic.forward(g, feats)
    }

    pub fn spatial_embed(&self, g: &mut Graph<T>, feats: &StageFeatures) -> Result<Var> {
        match &self.spatial {
            Some(head) => head.forward(g, feats),
            None => invalid("encoder has no spatial head"),
        }
    }

    /// One backbone pass feeding both heads.
    pub fn embed_vars(&self, g: &mut Graph<T>, image: Var) -> Result<EmbeddingVars> {
        let features = self.backbone_forward(g, image)?;
        let semantic = self.semantic_embed(g, &features)?;
        let spatial = match &self.spatial {
            Some(head) => Some(head.forward(g, &features)?),
            None => None,
        };
        let contrastive = match spatial {
            Some(s) => g.concat(&[semantic, s])?,
            None => semantic,
        };
        Ok(EmbeddingVars {
            features,
            semantic,
            spatial,
            contrastive,
        })
    }

    /// Inference-only per-branch embeddings of one image.
    pub fn embed(&self, image: &Tensor<T>) -> Result<BranchEmbeddings<T>> {
        let mut g = Graph::inference();
        let x = g.constant(image);
        let ev = self.embed_vars(&mut g, x)?;
        Ok(BranchEmbeddings {
            semantic: g.value(ev.semantic).to_vec(),
            spatial: ev.spatial.map(|s| g.value(s).to_vec()),
        })
    }

    /// Inference-only two-branch embedding; requires the spatial head.
    pub fn hcl_embed(&self, image: &Tensor<T>) -> Result<EmbeddingPair<T>> {
        if !self.has_spatial() {
            return invalid("hcl_embed needs the spatial head");
        }
        let mut g = Graph::inference();
        let x = g.constant(image);
        let ev = self.embed_vars(&mut g, x)?;
        Ok(EmbeddingPair {
            semantic: g.value(ev.semantic).to_vec(),
            spatial: g.value(ev.spatial.expect("spatial head present")).to_vec(),
            concat: g.value(ev.contrastive).to_vec(),
        })
    }

    /// All parameters in a fixed order: backbone, semantic head, spatial head.
    pub fn visit_params<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.backbone.visit(f);
        self.semantic.visit(f);
        if let Some(s) = &self.spatial {
            s.visit(f);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.backbone.visit_mut(f);
        self.semantic.visit_mut(f);
        if let Some(s) = &mut self.spatial {
            s.visit_mut(f);
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |n, t| out.push((n, t)));
        out
    }

    /// Backbone weights only; head parameters never leave pre-training.
    pub fn export_backbone(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.backbone.visit(&mut |n, t| out.push((n, t.clone())));
        out
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, t| n += t.numel());
        n
    }

    /// Parameter names and shapes, independent of values.
    pub fn structure(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |n, t| out.push((n, t.shape().to_vec())));
        out
    }

    /// Order-sensitive checksum of every parameter bit.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        self.visit_params(&mut |_, t| {
            for v in t.data() {
                h ^= v.bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        });
        h
    }

    /// Moves each parameter's gradient out of the graph into `Tensor::grad`.
    pub fn collect_grads(&mut self, g: &Graph<T>, grads: &crate::gradcore::Gradients<T>) {
        self.visit_params_mut(&mut |_, t| {
            let gv = match g.bound_var(t) {
                Some(v) => grads.wrt(g, v),
                None => vec![T::zero(); t.numel()],
            };
            t.set_grad(gv).expect("gradient matches parameter shape");
        });
    }
}
