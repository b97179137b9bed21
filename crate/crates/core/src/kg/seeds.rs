use super::AlignedPair;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Partition of the seed alignments into anchor links and training targets,
/// plus the disjoint test pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSplit {
    pub anchors: Vec<AlignedPair>,
    pub train: Vec<AlignedPair>,
    pub test: Vec<AlignedPair>,
    pub anchor_fraction: f64,
}

impl SeedSplit {
    /// All seed pairs (anchors then train).
    pub fn seeds(&self) -> Vec<AlignedPair> {
        self.anchors.iter().chain(&self.train).copied().collect()
    }

    /// Attaches the test pairs; fails if any of them is also a seed.
    pub fn with_test(mut self, test: Vec<AlignedPair>) -> Result<Self> {
        let seeds: HashSet<AlignedPair> = self.seeds().into_iter().collect();
        if let Some(p) = test.iter().find(|p| seeds.contains(p)) {
            return Err(Error::Data(format!(
                "test pair ({}, {}) is also a seed alignment",
                p.left, p.right
            )));
        }
        self.test = test;
        Ok(self)
    }
}

/// Shuffles the (deduplicated) seeds with a seeded RNG and cuts them at
/// `round(n * anchor_fraction)`, keeping both parts non-empty.
pub fn split_seeds(seeds: &[AlignedPair], anchor_fraction: f64, rng_seed: u64) -> Result<SeedSplit> {
    if !(anchor_fraction > 0.0 && anchor_fraction < 1.0) {
        return Err(Error::Config(format!(
            "anchor fraction must lie in (0, 1), got {anchor_fraction}"
        )));
    }
    let mut seen = HashSet::new();
    let mut pool: Vec<AlignedPair> = seeds.iter().copied().filter(|p| seen.insert(*p)).collect();
    if pool.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 seed pairs to split, got {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    pool.shuffle(&mut rng);
    let n = pool.len();
    let cut = ((n as f64 * anchor_fraction).round() as usize).clamp(1, n - 1);
    let train = pool.split_off(cut);
    Ok(SeedSplit {
        anchors: pool,
        train,
        test: Vec::new(),
        anchor_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds(n: u32) -> Vec<AlignedPair> {
        (0..n).map(|i| AlignedPair::new(i, i + 1000)).collect()
    }

    #[test]
    fn hundred_seeds_split_75_25() {
        let s = split_seeds(&seeds(100), 0.75, 7).unwrap();
        assert_eq!((s.anchors.len(), s.train.len()), (75, 25));
        let a: HashSet<_> = s.anchors.iter().collect();
        assert!(s.train.iter().all(|p| !a.contains(p)));
    }

    #[test]
    fn same_seed_same_split() {
        assert_eq!(
            split_seeds(&seeds(40), 0.75, 3).unwrap(),
            split_seeds(&seeds(40), 0.75, 3).unwrap()
        );
        assert_ne!(
            split_seeds(&seeds(40), 0.75, 3).unwrap(),
            split_seeds(&seeds(40), 0.75, 4).unwrap()
        );
    }

    #[test]
    fn four_seeds_round_to_three_and_one() {
        let s = split_seeds(&seeds(4), 0.75, 1).unwrap();
        assert_eq!((s.anchors.len(), s.train.len()), (3, 1));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(split_seeds(&seeds(1), 0.75, 0), Err(Error::Data(_))));
        assert!(matches!(split_seeds(&seeds(10), 1.0, 0), Err(Error::Config(_))));
        assert!(matches!(split_seeds(&seeds(10), 0.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn test_pairs_must_be_disjoint_from_seeds() {
        let s = split_seeds(&seeds(10), 0.5, 0).unwrap();
        assert!(s.clone().with_test(vec![AlignedPair::new(50, 51)]).is_ok());
        assert!(s.with_test(vec![AlignedPair::new(3, 1003)]).is_err());
    }
}
