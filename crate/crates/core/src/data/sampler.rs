//! Mini-batch samplers used to estimate saliency.
//!
//! Each pool of indices gets its own cursor that walks a shuffled copy of
//! the pool and reshuffles once fewer than `batch_size` items remain. Group 0
//! and the pooled (all-sample) stream share the same seed derivation, so a
//! pooled sampler over a group-0-only dataset emits exactly the group-0
//! batches of the paired sampler.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::GroupedDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// `(B0, B1)` as dataset indices.
pub type IndexPair = (Vec<usize>, Vec<usize>);

pub struct EpochCursor {
    pool: Vec<usize>,
    order: Vec<usize>,
    position: usize,
    with_replacement: bool,
    rng: ChaCha8Rng,
}

impl EpochCursor {
    pub fn new(pool: Vec<usize>, seed: u64, with_replacement: bool) -> Self {
        Self {
            order: pool.clone(),
            pool,
            // Forces a shuffle on first use.
            position: usize::MAX,
            with_replacement,
            rng: rng_from(seed),
        }
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        if self.with_replacement {
            return (0..batch_size)
                .map(|_| self.pool[self.rng.gen_range(0..self.pool.len())])
                .collect();
        }
        if self.position == usize::MAX || self.position + batch_size > self.order.len() {
            self.order.copy_from_slice(&self.pool);
            self.order.shuffle(&mut self.rng);
            self.position = 0;
        }
        let batch = self.order[self.position..self.position + batch_size].to_vec();
        self.position += batch_size;
        batch
    }
}

fn stream_seed(seed: u64, group: u8) -> u64 {
    derive_seed(seed, 0x5A11_0000 + group as u64)
}

fn check_pool(len: usize, batch_size: usize, with_replacement: bool, what: &str) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::config("saliency batch size must be positive"));
    }
    if len == 0 {
        return Err(Error::data(format!("{what} has no samples")));
    }
    if !with_replacement && len < batch_size {
        return Err(Error::data(format!(
            "{what} has {len} samples, fewer than batch size {batch_size}; enable sampling with replacement"
        )));
    }
    Ok(())
}

/// Streams group-pure batch pairs: `B0` from group 0, `B1` from group 1,
/// each group walking its own shuffled epochs.
pub struct PairSampler {
    cursors: [EpochCursor; 2],
    batch_size: usize,
}

impl PairSampler {
    pub fn new(dataset: &GroupedDataset, batch_size: usize, seed: u64, with_replacement: bool) -> Result<Self> {
        let g0 = dataset.group_indices(0);
        let g1 = dataset.group_indices(1);
        check_pool(g0.len(), batch_size, with_replacement, "group 0")?;
        check_pool(g1.len(), batch_size, with_replacement, "group 1")?;
        Ok(Self {
            cursors: [
                EpochCursor::new(g0, stream_seed(seed, 0), with_replacement),
                EpochCursor::new(g1, stream_seed(seed, 1), with_replacement),
            ],
            batch_size,
        })
    }

    pub fn next_pair(&mut self) -> IndexPair {
        let b0 = self.cursors[0].next_batch(self.batch_size);
        let b1 = self.cursors[1].next_batch(self.batch_size);
        (b0, b1)
    }
}

/// Streams batches from the whole dataset regardless of group.
pub struct PooledSampler {
    cursor: EpochCursor,
    batch_size: usize,
}

impl PooledSampler {
    pub fn new(dataset: &GroupedDataset, batch_size: usize, seed: u64, with_replacement: bool) -> Result<Self> {
        check_pool(dataset.len(), batch_size, with_replacement, "dataset")?;
        Ok(Self {
            cursor: EpochCursor::new((0..dataset.len()).collect(), stream_seed(seed, 0), with_replacement),
            batch_size,
        })
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        self.cursor.next_batch(self.batch_size)
    }
}

/// `count` pairs from a fresh [`PairSampler`].
pub fn sample_pair_batches(
    dataset: &GroupedDataset,
    batch_size: usize,
    count: usize,
    seed: u64,
    with_replacement: bool,
) -> Result<Vec<IndexPair>> {
    let mut sampler = PairSampler::new(dataset, batch_size, seed, with_replacement)?;
    Ok((0..count).map(|_| sampler.next_pair()).collect())
}

/// `count` batches from a fresh [`PooledSampler`].
pub fn sample_pooled_batches(
    dataset: &GroupedDataset,
    batch_size: usize,
    count: usize,
    seed: u64,
    with_replacement: bool,
) -> Result<Vec<Vec<usize>>> {
    let mut sampler = PooledSampler::new(dataset, batch_size, seed, with_replacement)?;
    Ok((0..count).map(|_| sampler.next_batch()).collect())
}
