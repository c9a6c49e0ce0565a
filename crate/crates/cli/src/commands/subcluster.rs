//! Cluster the features a fitted model selected and rank cluster pairs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use hdpair_core::distances::{MetricRegistry, PEARSON_DISTANCE, SCALED_EUCLIDEAN};
use hdpair_core::subcluster::{self, FeatureClustering, DEFAULT_CLUSTERS, DEFAULT_TOP};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::scca::ModelFile;
use super::{load_pair, Ctx};
use crate::config::{require, resolve};
use crate::output::{out_dir, write_report, CsvOut, Provenance};

#[derive(Debug, Args, Serialize)]
pub struct SubclusterArgs {
    /// model.json written by `scca fit` or `scca cv`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    x_metric: Option<String>,
    #[arg(long)]
    y_metric: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubclusterConfig {
    pub model: Option<PathBuf>,
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub k: usize,
    pub top: usize,
    pub x_metric: String,
    pub y_metric: String,
    pub out: PathBuf,
}

impl Default for SubclusterConfig {
    fn default() -> Self {
        SubclusterConfig {
            model: None,
            x: None,
            y: None,
            k: DEFAULT_CLUSTERS,
            top: DEFAULT_TOP,
            x_metric: SCALED_EUCLIDEAN.into(),
            y_metric: PEARSON_DISTANCE.into(),
            out: "subcluster".into(),
        }
    }
}

fn write_members(dir: &Path, side: &str, c: &FeatureClustering) -> Result<()> {
    for label in 1..=c.k {
        let mut out = CsvOut::create(&dir.join(format!("{side}_cluster_{label}.csv")), &["column"])?;
        for i in c.members(label) {
            out.row(&[c.feature_indices[i].to_string()])?;
        }
        out.finish()?;
    }
    Ok(())
}

pub fn run(ctx: &Ctx, args: &SubclusterArgs) -> Result<()> {
    let path = ["subcluster"];
    let cfg: SubclusterConfig = resolve(ctx.file, &path, args)?;
    let (m, x, y) = (require(&cfg.model, "model")?, require(&cfg.x, "x")?, require(&cfg.y, "y")?);
    let mf = ModelFile::load(m)?;
    let data = load_pair(x, y)?;
    if data.x.ncols() != mf.p || data.y.ncols() != mf.q {
        bail!(
            "data is {}×{} / {}×{} but the model was fit on p={}, q={}",
            data.n(),
            data.x.ncols(),
            data.n(),
            data.y.ncols(),
            mf.p,
            mf.q
        );
    }
    let rows = mf.train_rows(&data)?;
    let (sel_x, sel_y) = mf.model.pair.support_columns();
    let x_sel = data.x.data().select_rows(&rows).select_columns(&sel_x);
    let y_sel = data.y.data().select_rows(&rows).select_columns(&sel_y);
    let reg = MetricRegistry::default();
    let cluster = |m: &nalgebra::DMatrix<f64>, metric: &str, cols: &[usize], side: &str| -> Result<FeatureClustering> {
        if cols.len() < cfg.k {
            bail!("{side} side has {} selected features, fewer than k = {}", cols.len(), cfg.k);
        }
        let d = subcluster::feature_distance_matrix(m, reg.get(metric)?)?;
        let mut c = subcluster::complete_linkage(&d, cfg.k)?;
        c.feature_indices = cols.to_vec();
        Ok(c)
    };
    let cx = cluster(&x_sel, &cfg.x_metric, &sel_x, "x")?;
    let cy = cluster(&y_sel, &cfg.y_metric, &sel_y, "y")?;
    let ranking = subcluster::subcluster_cca(&x_sel, &y_sel, &cx, &cy, cfg.top)?;
    let dir = out_dir(&cfg.out)?;
    write_members(&dir, "x", &cx)?;
    write_members(&dir, "y", &cy)?;
    let prov = Provenance::new(&path, &cfg, None, &[m.as_path(), x.as_path(), y.as_path()])?;
    write_report(
        &dir.join("subcluster.json"),
        &prov,
        json!({
            "n_train": rows.len(),
            "top": ranking.top(),
            "ranking": ranking,
            "x_clustering": cx,
            "y_clustering": cy,
        }),
    )
}
