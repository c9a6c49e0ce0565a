//! Pairwise subject distances and their histograms for both modalities.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use hdpair_core::distances::{DistanceMatrix, PEARSON_DISTANCE, SCALED_EUCLIDEAN};
use hdpair_core::stats::Summary;
use serde::{Deserialize, Serialize};

use super::{distances, load_pair, Ctx};
use crate::config::{require, resolve};
use crate::output::{num, out_dir, write_report, CsvOut, Provenance};

#[derive(Debug, Args, Serialize)]
pub struct DistArgs {
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    x_metric: Option<String>,
    #[arg(long)]
    y_metric: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistConfig {
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub x_metric: String,
    pub y_metric: String,
    pub bins: usize,
    pub out: PathBuf,
}

impl Default for DistConfig {
    fn default() -> Self {
        DistConfig {
            x: None,
            y: None,
            x_metric: SCALED_EUCLIDEAN.into(),
            y_metric: PEARSON_DISTANCE.into(),
            bins: 50,
            out: "dist".into(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Histogram {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = if width > 0.0 { ((v - lo) / width).floor() as usize } else { 0 };
        counts[b.min(bins - 1)] += 1;
    }
    Histogram {
        lower: (0..bins).map(|b| lo + b as f64 * width).collect(),
        upper: (0..bins).map(|b| if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width }).collect(),
        counts,
    }
}

pub fn run(ctx: &Ctx, args: &DistArgs) -> Result<()> {
    let path = ["dist"];
    let cfg: DistConfig = resolve(ctx.file, &path, args)?;
    let (x, y) = (require(&cfg.x, "x")?, require(&cfg.y, "y")?);
    if cfg.bins == 0 {
        bail!("bins must be at least 1");
    }
    let data = load_pair(x, y)?;
    if data.n() < 2 {
        bail!("need at least 2 subjects, got {}", data.n());
    }
    let (dx, dy) = distances(&data, &cfg.x_metric, &cfg.y_metric)?;
    let dir = out_dir(&cfg.out)?;

    let mut pairs = CsvOut::create(&dir.join("distances.csv"), &["modality", "i", "j", "subject_i", "subject_j", "distance"])?;
    let mut hist = CsvOut::create(&dir.join("histogram.csv"), &["modality", "bin", "lower", "upper", "count"])?;
    let mut summary = serde_json::Map::new();
    for (name, d) in [("x", &dx), ("y", &dy)] {
        write_pairs(&mut pairs, name, d)?;
        let tri = d.upper_triangle();
        let h = histogram(&tri, cfg.bins);
        for b in 0..cfg.bins {
            hist.row(&[
                name.to_string(),
                b.to_string(),
                num(Some(h.lower[b])),
                num(Some(h.upper[b])),
                h.counts[b].to_string(),
            ])?;
        }
        summary.insert(
            name.into(),
            serde_json::json!({
                "metric": d.metric(),
                "n_pairs": tri.len(),
                "summary": Summary::of(&tri),
                "histogram": h,
            }),
        );
    }
    pairs.finish()?;
    hist.finish()?;
    summary.insert("n".into(), data.n().into());
    let prov = Provenance::new(&path, &cfg, None, &[x.as_path(), y.as_path()])?;
    write_report(&dir.join("dist_summary.json"), &prov, serde_json::Value::Object(summary))
}

fn write_pairs(out: &mut CsvOut, name: &str, d: &DistanceMatrix) -> Result<()> {
    let ids = d.subject_ids();
    for i in 0..d.n() {
        for j in i + 1..d.n() {
            out.row(&[
                name.to_string(),
                i.to_string(),
                j.to_string(),
                ids[i].clone(),
                ids[j].clone(),
                num(Some(d.get(i, j))),
            ])?;
        }
    }
    Ok(())
}
