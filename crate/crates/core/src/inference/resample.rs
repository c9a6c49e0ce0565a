//! Subsampling confidence intervals and the bootstrap distribution used to
//! show why sampling with replacement is biased for this statistic.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::statistic::triangle_pearson;
use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::stats::quantile_sorted;

pub const DEFAULT_SUBSAMPLE_RATIO: f64 = 0.135;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// `[θ̂_n − q_{1−α/2}/√n, θ̂_n − q_{α/2}/√n]` from quantiles of `√m (θ̂_m − θ̂_n)`.
    Root,
    /// Raw `(α/2, 1−α/2)` quantiles of the subsample statistics.
    Percentile,
}

impl std::str::FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "root" => Ok(CiMethod::Root),
            "percentile" => Ok(CiMethod::Percentile),
            other => Err(Error::UnknownStrategy {
                kind: "interval method",
                name: other.into(),
                available: vec!["percentile".into(), "root".into()],
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub ratio: f64,
    pub b: usize,
    pub level: f64,
    pub seed: u64,
    pub method: CiMethod,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            ratio: DEFAULT_SUBSAMPLE_RATIO,
            b: 10_000,
            level: 0.95,
            seed: 0,
            method: CiMethod::Root,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point_estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub subsample_ratio: f64,
    pub subsample_size: usize,
    pub n_subsamples: usize,
    /// Subsamples whose statistic was undefined.
    pub n_missing: usize,
    pub method: CiMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleOutcome {
    pub interval: ConfidenceInterval,
    /// Replicate statistics in replicate order; `None` when undefined.
    pub replicates: Vec<Option<f64>>,
}

pub fn subsample_size(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).round() as usize
}

pub fn subsample_ci(dx: &DistanceMatrix, dy: &DistanceMatrix, cfg: &SubsampleConfig) -> Result<SubsampleOutcome> {
    let n = dx.n();
    if !(cfg.ratio > 0.0 && cfg.ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!("subsample ratio {} outside (0, 1]", cfg.ratio)));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidParameter(format!("level {} outside (0, 1)", cfg.level)));
    }
    if cfg.b == 0 {
        return Err(Error::InvalidParameter("number of subsamples must be at least 1".into()));
    }
    let m = subsample_size(n, cfg.ratio);
    if m < 4 {
        return Err(Error::InvalidParameter(format!(
            "ratio {} of n={n} gives subsample size {m} < 4",
            cfg.ratio
        )));
    }
    let theta = super::statistic::distance_pair_correlation(dx, dy)?;
    let replicates: Vec<Option<f64>> = (0..cfg.b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, Purpose::Subsample, r);
            let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            triangle_pearson(&dx.submatrix(&idx), &dy.submatrix(&idx)).ok()
        })
        .collect();
    let mut vals: Vec<f64> = replicates.iter().flatten().copied().collect();
    let n_missing = cfg.b - vals.len();
    if vals.is_empty() {
        return Err(Error::Degenerate("every subsample statistic was undefined".into()));
    }
    let alpha = 1.0 - cfg.level;
    let (lower, upper) = match cfg.method {
        CiMethod::Root => {
            let sm = (m as f64).sqrt();
            let mut roots: Vec<f64> = vals.iter().map(|v| sm * (v - theta)).collect();
            roots.sort_by(f64::total_cmp);
            let sn = (n as f64).sqrt();
            (
                theta - quantile_sorted(&roots, 1.0 - alpha / 2.0) / sn,
                theta - quantile_sorted(&roots, alpha / 2.0) / sn,
            )
        }
        CiMethod::Percentile => {
            vals.sort_by(f64::total_cmp);
            (quantile_sorted(&vals, alpha / 2.0), quantile_sorted(&vals, 1.0 - alpha / 2.0))
        }
    };
    Ok(SubsampleOutcome {
        interval: ConfidenceInterval {
            point_estimate: theta,
            lower,
            upper,
            level: cfg.level,
            subsample_ratio: cfg.ratio,
            subsample_size: m,
            n_subsamples: cfg.b,
            n_missing,
            method: cfg.method,
        },
        replicates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub observed: f64,
    pub replicates: Vec<Option<f64>>,
    pub n_missing: usize,
    pub seed: u64,
}

impl BootstrapOutcome {
    pub fn values(&self) -> Vec<f64> {
        self.replicates.iter().flatten().copied().collect()
    }
}

/// Statistic of one resample given by index list (duplicates allowed).
pub fn resample_statistic(dx: &DistanceMatrix, dy: &DistanceMatrix, idx: &[usize]) -> Option<f64> {
    triangle_pearson(&dx.submatrix(idx), &dy.submatrix(idx)).ok()
}

/// Size-`n` resamples drawn with replacement. Duplicated subjects put
/// zeros into both triangles; resamples whose triangles are constant are
/// recorded as missing.
pub fn bootstrap_distribution(dx: &DistanceMatrix, dy: &DistanceMatrix, b: usize, seed: u64) -> Result<BootstrapOutcome> {
    let n = dx.n();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("bootstrap needs n >= 4, got {n}")));
    }
    if b == 0 {
        return Err(Error::InvalidParameter("number of bootstrap samples must be at least 1".into()));
    }
    let observed = super::statistic::distance_pair_correlation(dx, dy)?;
    let replicates: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Purpose::Bootstrap, r);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            resample_statistic(dx, dy, &idx)
        })
        .collect();
    let n_missing = replicates.iter().filter(|r| r.is_none()).count();
    Ok(BootstrapOutcome {
        observed,
        replicates,
        n_missing,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::statistic::tests::random_pair;

    #[test]
    fn full_ratio_is_degenerate_interval() {
        let (dx, dy) = random_pair(15, 4, 4, 1);
        for method in [CiMethod::Root, CiMethod::Percentile] {
            let cfg = SubsampleConfig {
                ratio: 1.0,
                b: 20,
                level: 0.95,
                seed: 3,
                method,
            };
            let ci = subsample_ci(&dx, &dy, &cfg).unwrap().interval;
            assert!((ci.lower - ci.point_estimate).abs() < 1e-12);
            assert!((ci.upper - ci.point_estimate).abs() < 1e-12);
        }
    }

    #[test]
    fn too_small_subsample_rejected() {
        let (dx, dy) = random_pair(20, 4, 4, 2);
        let cfg = SubsampleConfig {
            ratio: 0.1,
            b: 5,
            ..Default::default()
        };
        assert!(matches!(subsample_ci(&dx, &dy, &cfg), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn reproducible_across_threads() {
        let (dx, dy) = random_pair(30, 4, 4, 3);
        let cfg = SubsampleConfig {
            ratio: 0.5,
            b: 2,
            seed: 11,
            ..Default::default()
        };
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| subsample_ci(&dx, &dy, &cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
        assert_eq!(run(1), run(1));
    }

    #[test]
    fn all_identical_resample_is_missing() {
        let (dx, dy) = random_pair(8, 4, 4, 4);
        assert_eq!(resample_statistic(&dx, &dy, &[2; 8]), None);
    }

    #[test]
    fn bootstrap_counts_missing() {
        let (dx, dy) = random_pair(10, 4, 4, 5);
        let out = bootstrap_distribution(&dx, &dy, 50, 1).unwrap();
        assert_eq!(out.replicates.len(), 50);
        assert_eq!(out.n_missing, out.replicates.iter().filter(|r| r.is_none()).count());
    }
}
