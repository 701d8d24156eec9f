//! Hashed bag-of-words features.

use fnv::FnvHasher;
use std::collections::BTreeMap;
use std::hash::Hasher;

pub const TEXT_DIM_BITS: u32 = 18;
pub const TEXT_DIM: u32 = 1 << TEXT_DIM_BITS;

/// Stable 64-bit FNV-1a hash of a string.
pub fn stable_hash(s: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(s.as_bytes());
    h.finish()
}

/// Sparse vector of `(index, value)` pairs sorted by index, no duplicates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| v * dense[i as usize])
            .sum()
    }
}

/// Lowercases, splits on non-alphanumeric characters, hashes each token into
/// `2^18` buckets, counts, and L2-normalizes. Empty text gives the zero vector.
pub fn featurize(text: &str) -> FeatureVector {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    let lower = text.to_lowercase();
    for token in lower.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        let idx = (stable_hash(token) % TEXT_DIM as u64) as u32;
        *counts.entry(idx).or_insert(0.0) += 1.0;
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    FeatureVector {
        entries: counts.into_iter().map(|(i, c)| (i, c / norm)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_empty() {
        let f = featurize("Hello, hello world!");
        assert!((f.norm() - 1.0).abs() < 1e-12);
        assert_eq!(f.entries.len(), 2);
        assert!(featurize("").is_empty());
        assert!(featurize(" ,.; ").is_empty());
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        assert_eq!(featurize("Foo-bar"), featurize("foo bar"));
    }

    #[test]
    fn counts_weight_repeated_tokens() {
        let f = featurize("a a b");
        let a = f
            .entries
            .iter()
            .find(|(i, _)| *i == (stable_hash("a") % TEXT_DIM as u64) as u32)
            .unwrap()
            .1;
        let b = f
            .entries
            .iter()
            .find(|(i, _)| *i == (stable_hash("b") % TEXT_DIM as u64) as u32)
            .unwrap()
            .1;
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hash_is_stable() {
        // FNV-1a 64 reference value for "a"
        assert_eq!(stable_hash("a"), 0xaf63dc4c8601ec8c);
    }
}
