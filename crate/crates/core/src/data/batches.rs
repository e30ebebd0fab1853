use rand::seq::SliceRandom;

use crate::rng::{stream_rng, Stream};

use super::{Dataset, ImageRecord};

/// Permutation of `0..n` determined by `(seed, epoch)`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Shuffle, &[epoch]));
    order
}

/// Visits every record once per epoch in seeded order; the last batch may be short.
pub fn iterate_batches(
    dataset: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> impl Iterator<Item = Vec<&ImageRecord>> + '_ {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let order = epoch_permutation(dataset.len(), seed, epoch);
    let batches: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    batches
        .into_iter()
        .map(move |b| b.into_iter().map(|i| dataset.get(i)).collect())
}
