//! Text-level fold assignment with rotating test and validation roles.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Assignment of texts (by corpus index) to folds.
///
/// Eligible texts are shuffled with the split seed and dealt out by
/// position, so fold sizes differ by at most one. Iteration `i` tests on
/// fold `i`, validates on fold `(i + 1) mod n` and trains on the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    /// `Some(fold)` per corpus text; `None` for texts left out of the plan.
    pub assignment: Vec<Option<usize>>,
}

impl FoldPlan {
    /// Plans folds over the texts flagged in `eligible`. Needs at least
    /// `n_folds` eligible texts and `n_folds ≥ 1`.
    pub fn new(eligible: &[bool], n_folds: usize, seed: u64) -> Option<FoldPlan> {
        let mut pool: Vec<usize> = (0..eligible.len()).filter(|&i| eligible[i]).collect();
        if n_folds == 0 || pool.len() < n_folds {
            return None;
        }
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignment = vec![None; eligible.len()];
        for (pos, &text) in pool.iter().enumerate() {
            assignment[text] = Some(pos % n_folds);
        }
        Some(FoldPlan {
            n_folds,
            seed,
            assignment,
        })
    }

    /// Texts in `fold`, in corpus order.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        self.members_of(|f| f == fold)
    }

    fn members_of(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.filter(|&f| keep(f)).map(|_| i))
            .collect()
    }

    pub fn validation_fold(&self, iteration: usize) -> usize {
        (iteration + 1) % self.n_folds
    }

    pub fn test(&self, iteration: usize) -> Vec<usize> {
        self.members(iteration)
    }

    pub fn validation(&self, iteration: usize) -> Vec<usize> {
        if self.n_folds < 2 {
            return Vec::new();
        }
        self.members(self.validation_fold(iteration))
    }

    /// Folds available for training in `iteration`, ascending.
    pub fn train_folds(&self, iteration: usize) -> Vec<usize> {
        let val = self.validation_fold(iteration);
        (0..self.n_folds)
            .filter(|&f| f != iteration && f != val)
            .collect()
    }

    /// All training texts of `iteration`, in corpus order.
    pub fn train(&self, iteration: usize) -> Vec<usize> {
        let k = self.train_folds(iteration).len();
        self.train_prefix(iteration, k)
    }

    /// Training texts from the first `k` training folds (ascending fold
    /// index), in corpus order. Nested in `k`.
    pub fn train_prefix(&self, iteration: usize, k: usize) -> Vec<usize> {
        let folds: Vec<usize> = self.train_folds(iteration).into_iter().take(k).collect();
        self.members_of(|f| folds.contains(&f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_and_balance() {
        let plan = FoldPlan::new(&[true; 23], 10, 5).unwrap();
        let mut seen = [0; 23];
        for i in 0..10 {
            let test = plan.test(i);
            assert!(test.len() == 2 || test.len() == 3);
            for t in test {
                seen[t] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn folds_of_one() {
        let plan = FoldPlan::new(&[true; 10], 10, 0).unwrap();
        for i in 0..10 {
            assert_eq!(plan.test(i).len(), 1);
            assert_eq!(plan.train(i).len(), 8);
        }
    }

    #[test]
    fn roles_are_disjoint_and_nested() {
        let plan = FoldPlan::new(&[true; 40], 10, 9).unwrap();
        for i in 0..10 {
            let test = plan.test(i);
            let val = plan.validation(i);
            let train = plan.train(i);
            assert!(test.iter().all(|t| !val.contains(t) && !train.contains(t)));
            assert!(val.iter().all(|t| !train.contains(t)));
            assert_eq!(test.len() + val.len() + train.len(), 40);
            for k in 1..8 {
                let small = plan.train_prefix(i, k);
                let big = plan.train_prefix(i, k + 1);
                assert!(small.iter().all(|t| big.contains(t)));
                assert!(big.len() > small.len());
            }
            assert_eq!(plan.train_prefix(i, 8), train);
        }
    }

    #[test]
    fn ineligible_texts_are_skipped() {
        let mut eligible = vec![true; 12];
        eligible[3] = false;
        let plan = FoldPlan::new(&eligible, 10, 1).unwrap();
        assert_eq!(plan.assignment[3], None);
        assert!(FoldPlan::new(&eligible[..9], 10, 1).is_none());
    }

    #[test]
    fn seed_controls_assignment() {
        let a = FoldPlan::new(&[true; 30], 10, 1).unwrap();
        assert_eq!(a, FoldPlan::new(&[true; 30], 10, 1).unwrap());
        assert_ne!(a, FoldPlan::new(&[true; 30], 10, 2).unwrap());
    }
}
