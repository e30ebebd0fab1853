use serde::{Deserialize, Serialize};

use crate::augment::AugConfig;
use crate::data::Dataset;
use crate::error::{invalid, Result};

use super::protocol::{encode_views, run_protocol, Features, ProtocolOutcome, ViewBank, ViewEncoder};

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` when either side has no rank variance.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoUBinReport {
    pub seed: u64,
    pub gallery_capacity: usize,
    pub aug: AugConfig,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub hits: Vec<usize>,
    /// `None` for empty bins.
    pub accuracy: Vec<Option<f64>>,
    pub total_queries: usize,
    pub overall_accuracy: f64,
    /// Rank correlation of bin midpoint against bin accuracy over non-empty bins.
    pub spearman: Option<f64>,
}

impl IoUBinReport {
    pub fn from_outcome(
        outcome: &ProtocolOutcome,
        bins: usize,
        seed: u64,
        gallery_capacity: usize,
        aug: AugConfig,
    ) -> Result<Self> {
        if bins < 2 {
            return invalid(format!("need at least 2 IoU bins, got {bins}"));
        }
        let bin_edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        let mut counts = vec![0usize; bins];
        let mut hits = vec![0usize; bins];
        for (&iou, &hit) in outcome.ious.iter().zip(&outcome.hits) {
            let b = ((iou * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
            hits[b] += hit as usize;
        }
        let accuracy: Vec<Option<f64>> = counts
            .iter()
            .zip(&hits)
            .map(|(&c, &h)| (c > 0).then(|| h as f64 / c as f64))
            .collect();
        let (mids, accs): (Vec<f64>, Vec<f64>) = accuracy
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|a| ((bin_edges[i] + bin_edges[i + 1]) / 2.0, a)))
            .unzip();
        Ok(IoUBinReport {
            seed,
            gallery_capacity,
            aug,
            bin_edges,
            counts,
            hits,
            accuracy,
            total_queries: outcome.hits.len(),
            overall_accuracy: outcome.accuracy(),
            spearman: spearman(&mids, &accs),
        })
    }
}

/// Retrieval accuracy per view-IoU bin under crop-and-rescale-only views.
pub fn iou_binned_accuracy<E: ViewEncoder + ?Sized>(
    encoder: &E,
    dataset: &Dataset,
    gallery_capacity: usize,
    bins: usize,
    out_size: usize,
    seed: u64,
) -> Result<IoUBinReport> {
    if bins < 2 {
        return invalid(format!("need at least 2 IoU bins, got {bins}"));
    }
    let aug = AugConfig {
        out_size,
        ..AugConfig::default()
    }
    .crop_only();
    let bank = encode_views(encoder, dataset, gallery_capacity, &aug, seed)?;
    let outcome = run_protocol(&bank, Features::Contrastive, false)?;
    IoUBinReport::from_outcome(&outcome, bins, seed, gallery_capacity, aug)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    SemanticOnly,
    HalfHalf,
}

impl SweepMode {
    /// Per-branch `(semantic, spatial)` lengths for a total length.
    pub fn split(self, dim: usize) -> Result<(usize, usize)> {
        match self {
            SweepMode::SemanticOnly => Ok((dim, 0)),
            SweepMode::HalfHalf if dim % 2 == 0 => Ok((dim / 2, dim / 2)),
            SweepMode::HalfHalf => invalid(format!("half-half split needs an even dim, got {dim}")),
        }
    }

    fn features(self, dim: usize) -> Features {
        match self {
            SweepMode::SemanticOnly => Features::SemanticPca(dim),
            SweepMode::HalfHalf => Features::HalfHalfPca(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSweepRow {
    pub total_dim: usize,
    pub semantic_dim: usize,
    pub spatial_dim: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSweepReport {
    pub seed: u64,
    pub gallery_capacity: usize,
    pub mode: SweepMode,
    pub renormalize: bool,
    pub rows: Vec<DimSweepRow>,
}

/// Runs the protocol once per requested length over already-encoded views.
pub fn dim_sweep_bank(bank: &ViewBank, dims: &[usize], mode: SweepMode, renormalize: bool) -> Result<DimSweepReport> {
    if dims.is_empty() {
        return invalid("dim sweep needs at least one dim");
    }
    let splits = dims.iter().map(|&d| mode.split(d)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(dims.len());
    for (&dim, (semantic_dim, spatial_dim)) in dims.iter().zip(splits) {
        let outcome = run_protocol(bank, mode.features(dim), renormalize)?;
        rows.push(DimSweepRow {
            total_dim: dim,
            semantic_dim,
            spatial_dim,
            accuracy: outcome.accuracy(),
        });
    }
    Ok(DimSweepReport {
        seed: bank.seed,
        gallery_capacity: bank.gallery_capacity,
        mode,
        renormalize,
        rows,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn dim_sweep<E: ViewEncoder + ?Sized>(
    encoder: &E,
    dataset: &Dataset,
    gallery_capacity: usize,
    aug: &AugConfig,
    dims: &[usize],
    mode: SweepMode,
    renormalize: bool,
    seed: u64,
) -> Result<DimSweepReport> {
    for &d in dims {
        mode.split(d)?;
    }
    let bank = encode_views(encoder, dataset, gallery_capacity, aug, seed)?;
    dim_sweep_bank(&bank, dims, mode, renormalize)
}
