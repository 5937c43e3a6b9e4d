//! Seeded k-fold partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Assignment of every example index to exactly one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
}

/// Shuffles `0..n_examples` under `seed` and deals indices round-robin, so
/// fold sizes differ by at most one.
pub fn kfold_plan(n_examples: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    if k > n_examples {
        return Err(Error::invalid(format!(
            "cannot split {n_examples} examples into {k} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..n_examples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);

    let mut assignment = vec![0; n_examples];
    for (pos, &example) in perm.iter().enumerate() {
        assignment[example] = pos % k;
    }
    Ok(FoldPlan { k, assignment })
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_examples(&self) -> usize {
        self.assignment.len()
    }

    pub fn fold_of(&self, example: usize) -> usize {
        self.assignment[example]
    }

    /// Example indices held out by `fold`, ascending.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        assert!(fold < self.k, "fold {fold} out of range");
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Example indices trained on when `fold` is held out, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        assert!(fold < self.k, "fold {fold} out of range");
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}
