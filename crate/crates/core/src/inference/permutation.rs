//! One-sided permutation test that relabels the subjects of `D^X` only.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::statistic::TriangleCorrelation;
use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub n_permutations: usize,
    pub null_samples: Vec<f64>,
    /// Share of replicates at or above the observed statistic.
    pub p_value: f64,
    /// `(1 + count) / (1 + B)`.
    pub p_value_smoothed: f64,
    pub seed: u64,
}

/// The permutation used by replicate `index`.
pub fn replicate_permutation(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, Purpose::Permutation, index));
    perm
}

pub fn permutation_test(dx: &DistanceMatrix, dy: &DistanceMatrix, b: usize, seed: u64) -> Result<PermutationResult> {
    if b == 0 {
        return Err(Error::InvalidParameter("number of permutations must be at least 1".into()));
    }
    let tc = TriangleCorrelation::new(dx, dy)?;
    let observed = tc.observed();
    let n = tc.n();
    let null_samples: Vec<f64> = (0..b as u64)
        .into_par_iter()
        .map(|r| tc.permuted(&replicate_permutation(n, seed, r)))
        .collect();
    let count = null_samples.iter().filter(|&&v| v >= observed).count();
    Ok(PermutationResult {
        observed,
        n_permutations: b,
        p_value: count as f64 / b as f64,
        p_value_smoothed: (1 + count) as f64 / (1 + b) as f64,
        null_samples,
        seed,
    })
}
