//! Inference on distance-based correlations.
//!
//! Each procedure implements [`InferenceMethod`] and is registered by name
//! in an [`InferenceRegistry`]; the CLI's `infer <name>` looks methods up
//! there.

pub mod dcor;
pub mod permutation;
pub mod rank;
pub mod resample;
pub mod statistic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distances::{distance_matrix, DistanceMatrix, Metric};
use crate::error::{Error, Result};
use crate::matrixio::PairedDataset;
use crate::stats::Summary;

pub use dcor::{dcor_ttest, ucenter, DcorResult};
pub use permutation::{permutation_test, PermutationResult};
pub use rank::{rank_correlations, RankCorrelations};
pub use resample::{bootstrap_distribution, subsample_ci, BootstrapOutcome, CiMethod, ConfidenceInterval, SubsampleConfig};
pub use statistic::distance_pair_correlation;

/// A paired dataset with its two distance matrices.
pub struct InferenceInput<'a> {
    pub data: &'a PairedDataset,
    pub dx: DistanceMatrix,
    pub dy: DistanceMatrix,
}

impl<'a> InferenceInput<'a> {
    pub fn new(data: &'a PairedDataset, x_metric: &dyn Metric, y_metric: &dyn Metric) -> Result<Self> {
        Ok(InferenceInput {
            data,
            dx: distance_matrix(&data.x, x_metric)?,
            dy: distance_matrix(&data.y, y_metric)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceSettings {
    /// Permutations, subsamples, or bootstrap resamples.
    pub b: usize,
    pub seed: u64,
    pub ratio: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        InferenceSettings {
            b: 10_000,
            seed: 0,
            ratio: resample::DEFAULT_SUBSAMPLE_RATIO,
            level: 0.95,
            method: CiMethod::Root,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub method: String,
    pub observed: f64,
    pub p_value: Option<f64>,
    pub p_value_smoothed: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
    pub replicate_summary: Option<Summary>,
    pub n_missing: usize,
    pub detail: serde_json::Value,
    #[serde(skip)]
    pub replicates: Vec<Option<f64>>,
}

pub trait InferenceMethod: Send + Sync {
    fn name(&self) -> &'static str;

    fn run(&self, input: &InferenceInput<'_>, settings: &InferenceSettings) -> Result<InferenceReport>;
}

pub struct Permutation;
pub struct DcorTTest;
pub struct Subsampling;
pub struct Bootstrap;

impl InferenceMethod for Permutation {
    fn name(&self) -> &'static str {
        "perm"
    }

    fn run(&self, input: &InferenceInput<'_>, s: &InferenceSettings) -> Result<InferenceReport> {
        let r = permutation_test(&input.dx, &input.dy, s.b, s.seed)?;
        let ranks = rank_correlations(&input.dx, &input.dy)?;
        Ok(InferenceReport {
            method: self.name().into(),
            observed: r.observed,
            p_value: Some(r.p_value),
            p_value_smoothed: Some(r.p_value_smoothed),
            ci: None,
            replicate_summary: Summary::of(&r.null_samples),
            n_missing: 0,
            detail: serde_json::json!({
                "n_permutations": r.n_permutations,
                "seed": r.seed,
                "spearman": ranks.spearman,
                "kendall": ranks.kendall,
            }),
            replicates: r.null_samples.into_iter().map(Some).collect(),
        })
    }
}

impl InferenceMethod for DcorTTest {
    fn name(&self) -> &'static str {
        "dcor"
    }

    fn run(&self, input: &InferenceInput<'_>, _: &InferenceSettings) -> Result<InferenceReport> {
        let r = dcor_ttest(&input.data.x, &input.data.y)?;
        Ok(InferenceReport {
            method: self.name().into(),
            observed: r.bias_corrected_r,
            p_value: Some(r.p_value),
            p_value_smoothed: None,
            ci: None,
            replicate_summary: None,
            n_missing: 0,
            detail: serde_json::json!({
                "t_statistic": r.t_statistic,
                "degrees_of_freedom": r.degrees_of_freedom,
            }),
            replicates: Vec::new(),
        })
    }
}

impl InferenceMethod for Subsampling {
    fn name(&self) -> &'static str {
        "subsample"
    }

    fn run(&self, input: &InferenceInput<'_>, s: &InferenceSettings) -> Result<InferenceReport> {
        let cfg = SubsampleConfig {
            ratio: s.ratio,
            b: s.b,
            level: s.level,
            seed: s.seed,
            method: s.method,
        };
        let out = subsample_ci(&input.dx, &input.dy, &cfg)?;
        let vals: Vec<f64> = out.replicates.iter().flatten().copied().collect();
        Ok(InferenceReport {
            method: self.name().into(),
            observed: out.interval.point_estimate,
            p_value: None,
            p_value_smoothed: None,
            replicate_summary: Summary::of(&vals),
            n_missing: out.interval.n_missing,
            ci: Some(out.interval),
            detail: serde_json::json!({ "seed": s.seed }),
            replicates: out.replicates,
        })
    }
}

impl InferenceMethod for Bootstrap {
    fn name(&self) -> &'static str {
        "bootstrap"
    }

    fn run(&self, input: &InferenceInput<'_>, s: &InferenceSettings) -> Result<InferenceReport> {
        let out = bootstrap_distribution(&input.dx, &input.dy, s.b, s.seed)?;
        let vals = out.values();
        Ok(InferenceReport {
            method: self.name().into(),
            observed: out.observed,
            p_value: None,
            p_value_smoothed: None,
            ci: None,
            replicate_summary: Summary::of(&vals),
            n_missing: out.n_missing,
            detail: serde_json::json!({ "seed": s.seed }),
            replicates: out.replicates,
        })
    }
}

pub struct InferenceRegistry {
    methods: BTreeMap<&'static str, Box<dyn InferenceMethod>>,
}

impl Default for InferenceRegistry {
    fn default() -> Self {
        let mut r = InferenceRegistry {
            methods: BTreeMap::new(),
        };
        r.register(Box::new(Permutation));
        r.register(Box::new(DcorTTest));
        r.register(Box::new(Subsampling));
        r.register(Box::new(Bootstrap));
        r
    }
}

impl InferenceRegistry {
    pub fn register(&mut self, method: Box<dyn InferenceMethod>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn InferenceMethod> {
        self.methods.get(name).map(|m| m.as_ref()).ok_or_else(|| Error::UnknownStrategy {
            kind: "inference method",
            name: name.into(),
            available: self.names(),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.methods.keys().map(|s| s.to_string()).collect()
    }
}
