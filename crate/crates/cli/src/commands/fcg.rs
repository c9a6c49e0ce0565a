//! Per-subject FCG construction from a directory of subject folders.
//!
//! Layout: `<subjects>/<id>/timeseries.csv` (T × m with an ROI header) and
//! `<subjects>/<id>/nuisance.csv` (T × k with a header). Subjects are
//! processed in sorted folder-name order.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use hdpair_core::fcg::{self, BandpassSpec, FilterMode, NuisanceMatrix, RoiTimeSeries};
use hdpair_core::matrixio::FeatureMatrix;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{parse_format, Ctx};
use crate::config::{require, resolve};
use crate::output::{out_dir, write_report, Provenance};

#[derive(Debug, Args, Serialize)]
pub struct FcgArgs {
    /// Directory with one folder per subject.
    #[arg(long)]
    subjects: Option<PathBuf>,
    /// Sampling frequency in Hz.
    #[arg(long)]
    fs: Option<f64>,
    #[arg(long)]
    f_low: Option<f64>,
    #[arg(long)]
    f_high: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    /// zero-phase or causal.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    timeseries_file: Option<String>,
    #[arg(long)]
    nuisance_file: Option<String>,
    /// Skip nuisance regression (intercept only).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    no_nuisance: Option<bool>,
    /// The nuisance file already has an intercept column.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    nuisance_intercept: Option<bool>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcgConfig {
    pub subjects: Option<PathBuf>,
    pub fs: f64,
    pub f_low: f64,
    pub f_high: f64,
    pub order: usize,
    pub mode: String,
    pub timeseries_file: String,
    pub nuisance_file: String,
    pub no_nuisance: bool,
    pub nuisance_intercept: bool,
    pub format: String,
    pub out: PathBuf,
}

impl Default for FcgConfig {
    fn default() -> Self {
        let spec = BandpassSpec::default();
        FcgConfig {
            subjects: None,
            fs: 1.0 / 0.72,
            f_low: spec.f_low,
            f_high: spec.f_high,
            order: spec.order,
            mode: "zero-phase".into(),
            timeseries_file: "timeseries.csv".into(),
            nuisance_file: "nuisance.csv".into(),
            no_nuisance: false,
            nuisance_intercept: false,
            format: "csv".into(),
            out: "fcg".into(),
        }
    }
}

fn parse_mode(s: &str) -> Result<FilterMode> {
    match s {
        "zero-phase" => Ok(FilterMode::ZeroPhase),
        "causal" => Ok(FilterMode::Causal),
        other => bail!("unknown filter mode {other:?}; expected zero-phase or causal"),
    }
}

struct Subject {
    id: String,
    timeseries: PathBuf,
    nuisance: Option<PathBuf>,
}

fn discover(root: &Path, cfg: &FcgConfig) -> Result<Vec<Subject>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .with_context(|| format!("reading subjects directory {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no subject folders in {}", root.display());
    }
    dirs.into_iter()
        .map(|d| {
            let id = d.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let ts = d.join(&cfg.timeseries_file);
            if !ts.is_file() {
                bail!("subject {id}: missing time-series file {}", ts.display());
            }
            let nuisance = if cfg.no_nuisance {
                None
            } else {
                let n = d.join(&cfg.nuisance_file);
                if !n.is_file() {
                    bail!("subject {id}: missing nuisance file {}", n.display());
                }
                Some(n)
            };
            Ok(Subject {
                id,
                timeseries: ts,
                nuisance,
            })
        })
        .collect()
}

pub fn run(ctx: &Ctx, args: &FcgArgs) -> Result<()> {
    let path = ["fcg"];
    let cfg: FcgConfig = resolve(ctx.file, &path, args)?;
    let root = require(&cfg.subjects, "subjects")?;
    let mode = parse_mode(&cfg.mode)?;
    let format = parse_format(&cfg.format)?;
    let spec = BandpassSpec {
        f_low: cfg.f_low,
        f_high: cfg.f_high,
        order: cfg.order,
    };
    spec.validate(cfg.fs)?;
    let subjects = discover(root, &cfg)?;
    let rows: Vec<Vec<f64>> = subjects
        .par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let ts = RoiTimeSeries::load_csv(&s.timeseries, cfg.fs).with_context(|| format!("subject {}", s.id))?;
            let nuisance = match &s.nuisance {
                Some(p) => NuisanceMatrix::load_csv(p, cfg.nuisance_intercept).with_context(|| format!("subject {}", s.id))?,
                None => NuisanceMatrix::empty(ts.t()),
            };
            fcg::fcg_pipeline(&ts, &nuisance, &spec, mode).with_context(|| format!("subject {}", s.id))
        })
        .collect::<Result<_>>()?;
    let width = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(anyhow!(
            "subject {} has {} ROI pairs, expected {width} as for {}",
            subjects[i].id,
            rows[i].len(),
            subjects[0].id
        ));
    }
    let data = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
    let ids = subjects.iter().map(|s| s.id.clone()).collect();
    let m = FeatureMatrix::new(data, ids, "fcg")?;
    let dir = out_dir(&cfg.out)?;
    let ext = if cfg.format == "csv" { "csv" } else { "bin" };
    m.save(&dir.join(format!("fcg.{ext}")), format)?;
    let inputs: Vec<&Path> = subjects
        .iter()
        .flat_map(|s| std::iter::once(s.timeseries.as_path()).chain(s.nuisance.as_deref()))
        .collect();
    let prov = Provenance::new(&path, &cfg, None, &inputs)?;
    write_report(
        &dir.join("fcg_report.json"),
        &prov,
        serde_json::json!({
            "subjects": m.subject_ids(),
            "n_subjects": m.nrows(),
            "n_pairs": width,
        }),
    )
}
