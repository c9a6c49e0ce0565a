//! `infer <method>` and the three-row `report` summary.

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Subcommand};
use hdpair_core::distances::{PEARSON_DISTANCE, SCALED_EUCLIDEAN};
use hdpair_core::inference::{
    rank_correlations, resample, InferenceInput, InferenceRegistry, InferenceReport, InferenceSettings,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{load_pair, Ctx};
use crate::config::{require, resolve};
use crate::output::{num, out_dir, write_report, CsvOut, Provenance};

#[derive(Debug, Subcommand)]
pub enum InferCmd {
    /// Permutation test relabeling one modality's subjects.
    Perm(InferArgs),
    /// Bias-corrected distance correlation t-test.
    Dcor(InferArgs),
    /// Subsampling confidence interval.
    Subsample(InferArgs),
    /// Bootstrap distribution (for comparison with subsampling).
    Bootstrap(InferArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    x_metric: Option<String>,
    #[arg(long)]
    y_metric: Option<String>,
    /// Permutations, subsamples, or bootstrap resamples.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Subsample size as a fraction of n.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
    /// root or percentile.
    #[arg(long)]
    ci_method: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub x_metric: String,
    pub y_metric: String,
    pub b: usize,
    pub seed: u64,
    pub ratio: f64,
    pub level: f64,
    pub ci_method: String,
    pub out: PathBuf,
}

impl Default for InferConfig {
    fn default() -> Self {
        let s = InferenceSettings::default();
        InferConfig {
            x: None,
            y: None,
            x_metric: SCALED_EUCLIDEAN.into(),
            y_metric: PEARSON_DISTANCE.into(),
            b: s.b,
            seed: s.seed,
            ratio: resample::DEFAULT_SUBSAMPLE_RATIO,
            level: s.level,
            ci_method: "root".into(),
            out: "infer".into(),
        }
    }
}

impl InferConfig {
    fn settings(&self) -> Result<InferenceSettings> {
        Ok(InferenceSettings {
            b: self.b,
            seed: self.seed,
            ratio: self.ratio,
            level: self.level,
            method: self.ci_method.parse()?,
        })
    }
}

struct Loaded {
    cfg: InferConfig,
    x: PathBuf,
    y: PathBuf,
}

fn load(ctx: &Ctx, path: &[&str], args: &InferArgs) -> Result<Loaded> {
    let cfg: InferConfig = resolve(ctx.file, path, args)?;
    let x = require(&cfg.x, "x")?.clone();
    let y = require(&cfg.y, "y")?.clone();
    Ok(Loaded { cfg, x, y })
}

fn replicates_csv(path: &Path, reps: &[Option<f64>]) -> Result<()> {
    let mut out = CsvOut::create(path, &["replicate", "value"])?;
    for (i, r) in reps.iter().enumerate() {
        out.row(&[i.to_string(), num(*r)])?;
    }
    out.finish()
}

pub fn run(ctx: &Ctx, cmd: &InferCmd) -> Result<()> {
    let (name, args) = match cmd {
        InferCmd::Perm(a) => ("perm", a),
        InferCmd::Dcor(a) => ("dcor", a),
        InferCmd::Subsample(a) => ("subsample", a),
        InferCmd::Bootstrap(a) => ("bootstrap", a),
    };
    let path = ["infer", name];
    let l = load(ctx, &path, args)?;
    let settings = l.cfg.settings()?;
    let registry = InferenceRegistry::default();
    let method = registry.get(name)?;
    let data = load_pair(&l.x, &l.y)?;
    let reg = hdpair_core::distances::MetricRegistry::default();
    let input = InferenceInput::new(&data, reg.get(&l.cfg.x_metric)?, reg.get(&l.cfg.y_metric)?)?;
    let report = method.run(&input, &settings)?;
    let dir = out_dir(&l.cfg.out)?;
    if !report.replicates.is_empty() {
        replicates_csv(&dir.join(format!("{name}_replicates.csv")), &report.replicates)?;
    }
    let seed = (name != "dcor").then_some(l.cfg.seed);
    let prov = Provenance::new(&path, &l.cfg, seed, &[l.x.as_path(), l.y.as_path()])?;
    write_report(&dir.join(format!("infer_{name}.json")), &prov, json!({ "n": data.n(), "report": report }))
}

/// One row of the summary table.
#[derive(Debug, Serialize)]
pub struct TableRow {
    pub method: &'static str,
    pub correlation: f64,
    pub result_type: String,
    pub result: serde_json::Value,
    /// `*`, `**`, `***` for p below .05/.01/.001; `+` for an interval
    /// excluding zero.
    pub significance: String,
}

fn stars(p: f64) -> String {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        _ => "",
    }
    .into()
}

fn p_row(method: &'static str, r: &InferenceReport) -> TableRow {
    let p = r.p_value.unwrap_or(f64::NAN);
    TableRow {
        method,
        correlation: r.observed,
        result_type: "p-value".into(),
        result: json!(p),
        significance: stars(p),
    }
}

pub fn run_report(ctx: &Ctx, args: &InferArgs) -> Result<()> {
    let path = ["report"];
    let l = load(ctx, &path, args)?;
    let settings = l.cfg.settings()?;
    let data = load_pair(&l.x, &l.y)?;
    let reg = hdpair_core::distances::MetricRegistry::default();
    let input = InferenceInput::new(&data, reg.get(&l.cfg.x_metric)?, reg.get(&l.cfg.y_metric)?)?;
    let methods = InferenceRegistry::default();
    let perm = methods.get("perm")?.run(&input, &settings)?;
    let dcor = methods.get("dcor")?.run(&input, &settings)?;
    let sub = methods.get("subsample")?.run(&input, &settings)?;
    let ci = sub.ci.clone().expect("subsampling reports an interval");
    let rows = vec![
        p_row("Permutation", &perm),
        p_row("dCor t-test", &dcor),
        TableRow {
            method: "Subsampling",
            correlation: sub.observed,
            result_type: format!("{}% conf. int.", ci.level * 100.0),
            result: json!([ci.lower, ci.upper]),
            significance: if ci.lower > 0.0 || ci.upper < 0.0 { "+".into() } else { String::new() },
        },
    ];
    let ranks = rank_correlations(&input.dx, &input.dy)?;
    let dir = out_dir(&l.cfg.out)?;
    let prov = Provenance::new(&path, &l.cfg, Some(l.cfg.seed), &[l.x.as_path(), l.y.as_path()])?;
    write_report(
        &dir.join("table2.json"),
        &prov,
        json!({
            "n": data.n(),
            "rows": rows,
            "rank_correlations": ranks,
            "details": { "perm": perm, "dcor": dcor, "subsample": sub },
        }),
    )
}
