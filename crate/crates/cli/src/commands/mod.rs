pub mod dist;
pub mod fcg;
pub mod infer;
pub mod scca;
pub mod subcluster;
pub mod synth;

use std::path::Path;

use anyhow::{Context, Result};
use hdpair_core::distances::{DistanceMatrix, MetricRegistry};
use hdpair_core::matrixio::{self, Format, PairedDataset};

use crate::config::FileConfig;

pub struct Ctx<'a> {
    pub file: Option<&'a FileConfig>,
}

pub fn load_pair(x: &Path, y: &Path) -> Result<PairedDataset> {
    let xm = matrixio::load_matrix(x, Format::from_path(x)).with_context(|| format!("loading {}", x.display()))?;
    let ym = matrixio::load_matrix(y, Format::from_path(y)).with_context(|| format!("loading {}", y.display()))?;
    Ok(matrixio::pair(xm, ym)?)
}

pub fn distances(data: &PairedDataset, x_metric: &str, y_metric: &str) -> Result<(DistanceMatrix, DistanceMatrix)> {
    let reg = MetricRegistry::default();
    let dx = hdpair_core::distances::distance_matrix(&data.x, reg.get(x_metric)?).context("x distances")?;
    let dy = hdpair_core::distances::distance_matrix(&data.y, reg.get(y_metric)?).context("y distances")?;
    Ok((dx, dy))
}

pub fn parse_format(s: &str) -> Result<Format> {
    match s {
        "csv" => Ok(Format::Csv),
        "bin" => Ok(Format::Bin),
        other => anyhow::bail!("unknown matrix format {other:?}; expected csv or bin"),
    }
}
