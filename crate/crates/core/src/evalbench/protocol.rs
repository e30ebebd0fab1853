//! Offline instance discrimination with a frozen encoder and a rolling
//! gallery of key embeddings.

use serde::{Deserialize, Serialize};

use crate::augment::{sample_pair, AugConfig};
use crate::contrast::MemoryQueue;
use crate::data::{epoch_permutation, Dataset, Image};
use crate::error::{invalid, Result};
use crate::models::{BranchEmbeddings, Encoder};
use crate::real::Real;
use crate::rng::{derive_seed, Stream};

use super::pca::{fit_pca, PcaProjector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewRole {
    Query,
    Key,
}

/// Everything an encoder may condition on when embedding one view.
#[derive(Debug, Clone, Copy)]
pub struct ViewInput<'a> {
    pub id: u64,
    /// Position of the image in the shuffled evaluation order.
    pub position: usize,
    pub role: ViewRole,
    pub image: &'a Image,
}

pub trait ViewEncoder {
    fn encode(&self, view: &ViewInput<'_>) -> Result<BranchEmbeddings<f64>>;
}

impl<T: Real> ViewEncoder for Encoder<T> {
    fn encode(&self, view: &ViewInput<'_>) -> Result<BranchEmbeddings<f64>> {
        let e = self.embed(&view.image.to_tensor::<T>())?;
        let cast = |v: Vec<T>| v.into_iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
        Ok(BranchEmbeddings {
            semantic: cast(e.semantic),
            spatial: e.spatial.map(cast),
        })
    }
}

/// Embeddings of both views of every image, in evaluation order. The first
/// `fill` positions only seed the gallery; the rest are queries.
#[derive(Debug, Clone)]
pub struct ViewBank {
    pub seed: u64,
    pub gallery_capacity: usize,
    pub fill: usize,
    pub ids: Vec<u64>,
    pub keys: Vec<BranchEmbeddings<f64>>,
    /// `None` for gallery-seeding positions.
    pub queries: Vec<Option<BranchEmbeddings<f64>>>,
    pub ious: Vec<f64>,
}

impl ViewBank {
    pub fn query_count(&self) -> usize {
        self.ids.len() - self.fill
    }

    pub fn has_spatial(&self) -> bool {
        self.keys.first().is_some_and(|k| k.spatial.is_some())
    }
}

pub fn encode_views<E: ViewEncoder + ?Sized>(
    encoder: &E,
    dataset: &Dataset,
    gallery_capacity: usize,
    aug: &AugConfig,
    seed: u64,
) -> Result<ViewBank> {
    if gallery_capacity < 1 {
        return invalid("gallery capacity must be at least 1");
    }
    aug.validate()?;
    let n = dataset.len();
    let fill = gallery_capacity.min(n - 1);
    let order = epoch_permutation(n, derive_seed(seed, Stream::Eval, &[0]), 0);
    let view_seed = derive_seed(seed, Stream::Eval, &[1]);
    let mut bank = ViewBank {
        seed,
        gallery_capacity,
        fill,
        ids: Vec::with_capacity(n),
        keys: Vec::with_capacity(n),
        queries: Vec::with_capacity(n),
        ious: Vec::with_capacity(n),
    };
    for (position, &idx) in order.iter().enumerate() {
        let rec = dataset.get(idx);
        let pair = sample_pair(&rec.image, aug, view_seed, 0, rec.id)?;
        let input = |role, image| ViewInput {
            id: rec.id,
            position,
            role,
            image,
        };
        let query = if position >= fill {
            Some(encoder.encode(&input(ViewRole::Query, &pair.first))?)
        } else {
            None
        };
        bank.keys.push(encoder.encode(&input(ViewRole::Key, &pair.second))?);
        bank.queries.push(query);
        bank.ids.push(rec.id);
        bank.ious.push(pair.iou());
    }
    Ok(bank)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Features {
    /// The vector the encoder trains on (semantic, or both branches concatenated).
    Contrastive,
    /// Semantic branch compressed to the given length.
    SemanticPca(usize),
    /// Each branch compressed to half the given length, then concatenated.
    HalfHalfPca(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolEvent {
    Scored(usize),
    Enqueued(usize),
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub hits: Vec<bool>,
    /// View IoU of each query, aligned with `hits`.
    pub ious: Vec<f64>,
    /// Gallery size each query was scored against.
    pub gallery_sizes: Vec<usize>,
    pub events: Vec<ProtocolEvent>,
}

impl ProtocolOutcome {
    pub fn accuracy(&self) -> f64 {
        if self.hits.is_empty() {
            return 0.0;
        }
        self.hits.iter().filter(|&&h| h).count() as f64 / self.hits.len() as f64
    }
}

fn branch_rows(bank: &ViewBank, spatial: bool) -> Result<(Vec<f64>, usize)> {
    let mut rows = Vec::new();
    let mut d = 0;
    for k in &bank.keys[..bank.fill] {
        let v = if spatial {
            match &k.spatial {
                Some(s) => s,
                None => return invalid("encoder produced no spatial embedding"),
            }
        } else {
            &k.semantic
        };
        d = v.len();
        rows.extend_from_slice(v);
    }
    Ok((rows, d))
}

fn fit_branch(bank: &ViewBank, spatial: bool, dim: usize) -> Result<PcaProjector> {
    let (rows, d) = branch_rows(bank, spatial)?;
    fit_pca(&rows, d, dim)
}

/// Turns one view's embeddings into the vector that gets scored.
struct Featurizer {
    features: Features,
    semantic: Option<PcaProjector>,
    spatial: Option<PcaProjector>,
    renormalize: bool,
}

impl Featurizer {
    fn new(bank: &ViewBank, features: Features, renormalize: bool) -> Result<Self> {
        let (semantic, spatial) = match features {
            Features::Contrastive => (None, None),
            Features::SemanticPca(dim) => (Some(fit_branch(bank, false, dim)?), None),
            Features::HalfHalfPca(dim) => {
                if dim % 2 != 0 || dim == 0 {
                    return invalid(format!("half-half split needs an even positive dim, got {dim}"));
                }
                (
                    Some(fit_branch(bank, false, dim / 2)?),
                    Some(fit_branch(bank, true, dim / 2)?),
                )
            }
        };
        Ok(Featurizer {
            features,
            semantic,
            spatial,
            renormalize,
        })
    }

    fn apply(&self, e: &BranchEmbeddings<f64>) -> Result<Vec<f64>> {
        match self.features {
            Features::Contrastive => Ok(e.contrastive()),
            Features::SemanticPca(_) => self
                .semantic
                .as_ref()
                .expect("fitted")
                .project(&e.semantic, self.renormalize),
            Features::HalfHalfPca(_) => {
                let mut v = self
                    .semantic
                    .as_ref()
                    .expect("fitted")
                    .project(&e.semantic, self.renormalize)?;
                let spatial = match &e.spatial {
                    Some(s) => s,
                    None => return invalid("encoder produced no spatial embedding"),
                };
                v.extend(self.spatial.as_ref().expect("fitted").project(spatial, self.renormalize)?);
                Ok(v)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Replays the protocol over a bank: each query is scored against its own
/// key and the gallery by inner product (the key wins only if strictly
/// higher than every gallery entry), then its key is enqueued.
pub fn run_protocol(bank: &ViewBank, features: Features, renormalize: bool) -> Result<ProtocolOutcome> {
    let feat = Featurizer::new(bank, features, renormalize)?;
    let keys: Vec<Vec<f64>> = bank.keys.iter().map(|k| feat.apply(k)).collect::<Result<_>>()?;
    let dim = keys[0].len();
    let mut gallery = MemoryQueue::<f64>::new(bank.gallery_capacity, dim)?;
    gallery.push(&keys[..bank.fill])?;

    let q = bank.query_count();
    let mut out = ProtocolOutcome {
        hits: Vec::with_capacity(q),
        ious: Vec::with_capacity(q),
        gallery_sizes: Vec::with_capacity(q),
        events: Vec::with_capacity(2 * q),
    };
    #[allow(clippy::needless_range_loop)]
    for pos in bank.fill..bank.ids.len() {
        let query = feat.apply(bank.queries[pos].as_ref().expect("query encoded"))?;
        let positive = dot(&query, &keys[pos]);
        let best = gallery
            .filled_rows()
            .chunks_exact(dim)
            .map(|row| dot(&query, row))
            .fold(f64::NEG_INFINITY, f64::max);
        out.hits.push(positive > best);
        out.ious.push(bank.ious[pos]);
        out.gallery_sizes.push(gallery.len());
        out.events.push(ProtocolEvent::Scored(pos));
        gallery.push(&[&keys[pos]])?;
        out.events.push(ProtocolEvent::Enqueued(pos));
    }
    Ok(out)
}

/// Encodes the dataset once and runs the retrieval protocol.
pub fn contrastive_test<E: ViewEncoder + ?Sized>(
    encoder: &E,
    dataset: &Dataset,
    gallery_capacity: usize,
    aug: &AugConfig,
    features: Features,
    renormalize: bool,
    seed: u64,
) -> Result<ProtocolOutcome> {
    let bank = encode_views(encoder, dataset, gallery_capacity, aug, seed)?;
    run_protocol(&bank, features, renormalize)
}
