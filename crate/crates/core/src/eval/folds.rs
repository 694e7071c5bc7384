use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// `k` disjoint, sorted test folds covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
    n: usize,
    seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Everything outside `fold`, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut in_test = vec![false; self.n];
        for &i in &self.folds[fold] {
            in_test[i] = true;
        }
        (0..self.n).filter(|&i| !in_test[i]).collect()
    }
}

/// Shuffles each class with a seeded generator and deals it round-robin,
/// continuing the deal position across classes so fold sizes differ by at
/// most one.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("fold count {k} must be at least 2")));
    }
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = rng_from_seed(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Config(format!(
                "class {class} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            folds[(offset + j) % k].push(i);
        }
        offset = (offset + members.len()) % k;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan {
        folds,
        n: labels.len(),
        seed,
    })
}
