//! Deterministic train/test splitting shared by all dataset types.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Partition `0..n` into (train, test) index sets. `fraction` is the train
/// share. The same `(n, fraction, seed)` always yields the same partition;
/// each side is returned in ascending order.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Invariant("cannot split an empty dataset".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Param(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let m = (n as f64 * fraction).round() as usize;
    if m == 0 || m == n {
        return Err(Error::Param(format!(
            "split fraction {fraction} of {n} samples would leave train or test empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::derived(seed, "split");
    rng.shuffle(&mut idx);
    let mut train: Vec<usize> = idx[..m].to_vec();
    let mut test: Vec<usize> = idx[m..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_two_split_and_determinism() {
        let (a1, b1) = split_indices(10, 0.8, 7).unwrap();
        let (a2, b2) = split_indices(10, 0.8, 7).unwrap();
        assert_eq!(a1.len(), 8);
        assert_eq!(b1.len(), 2);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive() {
        let (a, b) = split_indices(23, 0.4, 3).unwrap();
        let mut all: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn fraction_one_rejected() {
        assert!(split_indices(10, 1.0, 7).is_err());
        assert!(split_indices(10, 0.0, 7).is_err());
    }

    #[test]
    fn tiny_fraction_leaves_empty_train() {
        assert!(split_indices(10, 0.01, 7).is_err());
    }

    // Frozen fixture: seeds 7 and 8 give different partitions of 10 items.
    // Checked once and pinned here.
    #[test]
    fn different_seeds_differ() {
        let (a7, _) = split_indices(10, 0.8, 7).unwrap();
        let (a8, _) = split_indices(10, 0.8, 8).unwrap();
        assert_ne!(a7, a8);
    }
}
