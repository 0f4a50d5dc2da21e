//! Grouped classification datasets: every sample carries features, a class
//! label and a binary group tag (0 = unprivileged, 1 = privileged).

mod csv_io;
mod sampler;
mod split;
mod synth;

pub use csv_io::{load_csv, save_csv, CsvSchema};
pub use sampler::{
    sample_pair_batches, sample_pooled_batches, EpochCursor, IndexPair, PairSampler, PooledSampler,
};
pub use split::{split, SplitSpec};
pub use synth::{gen_synthetic_biased, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::Batch;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Csv,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupedDataset {
    dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    groups: Vec<u8>,
    provenance: Provenance,
    seed: Option<u64>,
}

impl GroupedDataset {
    pub fn new(
        dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        groups: Vec<u8>,
        provenance: Provenance,
        seed: Option<u64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::data("feature dimension must be positive"));
        }
        if num_classes == 0 {
            return Err(Error::data("need at least one class"));
        }
        check_len("dataset features", labels.len() * dim, features.len())?;
        check_len("dataset groups", labels.len(), groups.len())?;
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::data(format!("sample {i}: label {y} >= {num_classes} classes")));
        }
        if let Some((i, g)) = groups.iter().enumerate().find(|(_, &g)| g > 1) {
            return Err(Error::data(format!("sample {i}: group {g} outside {{0,1}}")));
        }
        Ok(Self {
            dim,
            num_classes,
            features,
            labels,
            groups,
            provenance,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    /// Indices of the samples in `group`, in dataset order.
    pub fn group_indices(&self, group: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[i] == group).collect()
    }

    pub fn group_count(&self, group: u8) -> usize {
        self.groups.iter().filter(|&&g| g == group).count()
    }

    /// Samples at `indices`, in that order. Class count and provenance are kept.
    pub fn subset(&self, indices: &[usize]) -> GroupedDataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.features(i));
        }
        GroupedDataset {
            dim: self.dim,
            num_classes: self.num_classes,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            provenance: self.provenance.clone(),
            seed: self.seed,
        }
    }

    pub fn filter_group(&self, group: u8) -> GroupedDataset {
        self.subset(&self.group_indices(group))
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.features(i));
        }
        Batch::new(
            self.dim,
            features,
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.groups[i]).collect(),
        )
        .expect("dataset invariants guarantee a well-formed batch")
    }

    pub fn as_batch(&self) -> Batch {
        Batch::new(self.dim, self.features.clone(), self.labels.clone(), self.groups.clone())
            .expect("dataset invariants guarantee a well-formed batch")
    }

    /// Errors unless both groups have at least one sample.
    pub fn require_both_groups(&self) -> Result<()> {
        for g in 0..2u8 {
            if self.group_count(g) == 0 {
                return Err(Error::data(format!("group {g} has no samples")));
            }
        }
        Ok(())
    }
}
