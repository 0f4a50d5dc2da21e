use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::GroupedDataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fractions = [self.train, self.val, self.test];
        if fractions.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::config("split fractions must be positive"));
        }
        if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("split fractions must sum to 1"));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` samples: val and test are floored,
    /// the remainder goes to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
        let val = floor(self.val);
        let test = floor(self.test);
        (n - val - test, val, test)
    }

    /// Shuffled index sets `[train, val, test]`.
    pub fn indices(&self, n: usize) -> Result<[Vec<usize>; 3]> {
        self.validate()?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut crate::rng::rng_from(self.seed));
        let (train, val, _) = self.sizes(n);
        let test = order.split_off(train + val);
        let val = order.split_off(train);
        Ok([order, val, test])
    }
}

pub fn split(
    dataset: &GroupedDataset,
    spec: &SplitSpec,
) -> Result<(GroupedDataset, GroupedDataset, GroupedDataset)> {
    let [train, val, test] = spec.indices(dataset.len())?;
    Ok((dataset.subset(&train), dataset.subset(&val), dataset.subset(&test)))
}
