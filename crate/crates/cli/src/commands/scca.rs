//! `scca fit|cv|eval`: split, cross-validate, refit, and score.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Subcommand};
use hdpair_core::cca::{Init, SccaParams};
use hdpair_core::matrixio::PairedDataset;
use hdpair_core::selection::{self, FittedModel, DEFAULT_FOLDS, DEFAULT_GRID_SIDE};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{load_pair, Ctx};
use crate::config::{require, resolve};
use crate::output::{num, out_dir, write_report, CsvOut, Provenance};

#[derive(Debug, Subcommand)]
pub enum SccaCmd {
    /// Fit at fixed sparsity bounds on the training split.
    Fit(SccaArgs),
    /// Grid search by k-fold cross-validation, refit, and test.
    Cv(SccaArgs),
    /// Score a saved model on new data.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SccaArgs {
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// ℓ1 bounds (fit).
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    d1: Option<f64>,
    #[arg(long)]
    d2: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Points per side of the default log-spaced grid.
    #[arg(long)]
    grid_side: Option<usize>,
    /// CSV with header `c1,c2` replacing the default grid.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// svd or seeded-random.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SccaConfig {
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub seed: u64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub d1: f64,
    pub d2: f64,
    pub folds: usize,
    pub grid_side: usize,
    pub grid: Option<PathBuf>,
    pub max_iters: usize,
    pub tol: f64,
    pub init: String,
    pub out: PathBuf,
}

impl Default for SccaConfig {
    fn default() -> Self {
        let p = SccaParams::default();
        SccaConfig {
            x: None,
            y: None,
            seed: 0,
            c1: None,
            c2: None,
            d1: p.d1,
            d2: p.d2,
            folds: DEFAULT_FOLDS,
            grid_side: DEFAULT_GRID_SIDE,
            grid: None,
            max_iters: p.max_iters,
            tol: p.tol,
            init: "svd".into(),
            out: "scca".into(),
        }
    }
}

impl SccaConfig {
    fn params(&self, c1: f64, c2: f64) -> SccaParams {
        SccaParams {
            c1,
            c2,
            d1: self.d1,
            d2: self.d2,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }

    fn init(&self) -> Result<Init> {
        Ok(match self.init.parse()? {
            Init::SeededRandom(_) => Init::SeededRandom(self.seed),
            i => i,
        })
    }
}

/// What `scca fit`/`cv` persist so `eval` and `subcluster` can reuse it.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub model: FittedModel,
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub p: usize,
    pub q: usize,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
        let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        serde_json::from_value(v.get("model_file").cloned().unwrap_or(v)).with_context(|| format!("{}: not a model file", path.display()))
    }

    /// Row indices of the training subjects within `data`.
    pub fn train_rows(&self, data: &PairedDataset) -> Result<Vec<usize>> {
        rows_of(data, &self.train_subjects)
    }
}

fn rows_of(data: &PairedDataset, ids: &[String]) -> Result<Vec<usize>> {
    let all = data.x.subject_ids();
    ids.iter()
        .map(|id| all.iter().position(|s| s == id).ok_or_else(|| anyhow!("subject {id:?} not found in the data")))
        .collect()
}

fn load_grid(path: &Path, cfg: &SccaConfig) -> Result<Vec<SccaParams>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading grid {}", path.display()))?;
    let h = rdr.headers()?.clone();
    let col = |name: &str| h.iter().position(|c| c.trim() == name).ok_or_else(|| anyhow!("{}: no {name} column", path.display()));
    let (i1, i2) = (col("c1")?, col("c2")?);
    let mut grid = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| anyhow!("{}: row {r} is not numeric", path.display()))
        };
        grid.push(cfg.params(get(i1)?, get(i2)?));
    }
    if grid.is_empty() {
        bail!("{}: empty grid", path.display());
    }
    Ok(grid)
}

fn write_projections(path: &Path, sets: &[(&str, Vec<String>, Vec<f64>, Vec<f64>)]) -> Result<()> {
    let mut out = CsvOut::create(path, &["set", "subject", "x_score", "y_score"])?;
    for (set, ids, sx, sy) in sets {
        for i in 0..ids.len() {
            out.row(&[set.to_string(), ids[i].clone(), num(Some(sx[i])), num(Some(sy[i]))])?;
        }
    }
    out.finish()
}

fn write_alignment(path: &Path, weights: &[f64], support: &[usize], columns: &[usize]) -> Result<()> {
    let mut out = CsvOut::create(path, &["column", "weight"])?;
    for &i in support {
        let col = if columns.is_empty() { i } else { columns[i] };
        out.row(&[col.to_string(), num(Some(weights[i]))])?;
    }
    out.finish()
}

struct Split {
    train: Vec<usize>,
    test: Vec<usize>,
    x_train: DMatrix<f64>,
    y_train: DMatrix<f64>,
}

fn split(data: &PairedDataset, seed: u64) -> Result<Split> {
    let (train, test) = selection::train_test_split(data.n(), seed)?;
    Ok(Split {
        x_train: data.x.data().select_rows(&train),
        y_train: data.y.data().select_rows(&train),
        train,
        test,
    })
}

/// Write model, projections, and alignment files; return the test
/// correlation (if the test split is scorable).
fn emit_model(dir: &Path, data: &PairedDataset, s: &Split, model: FittedModel) -> Result<(f64, Option<f64>, ModelFile)> {
    let ids = data.x.subject_ids();
    let pick = |rows: &[usize]| rows.iter().map(|&r| ids[r].clone()).collect::<Vec<_>>();
    let (tx, ty) = model.scores(&s.x_train, &s.y_train)?;
    let train_corr = hdpair_core::cca::canonical_correlation(&tx, &ty)?;
    let x_test = data.x.data().select_rows(&s.test);
    let y_test = data.y.data().select_rows(&s.test);
    let (vx, vy) = model.scores(&x_test, &y_test)?;
    let test_corr = hdpair_core::cca::canonical_correlation(&vx, &vy).ok();
    write_projections(
        &dir.join("projections.csv"),
        &[("train", pick(&s.train), tx, ty), ("test", pick(&s.test), vx, vy)],
    )?;
    let pair = &model.pair;
    write_alignment(&dir.join("alignment_x.csv"), &pair.u, &pair.support_u, &pair.columns_x)?;
    write_alignment(&dir.join("alignment_y.csv"), &pair.v, &pair.support_v, &pair.columns_y)?;
    let mf = ModelFile {
        model,
        train_subjects: pick(&s.train),
        test_subjects: pick(&s.test),
        p: data.x.ncols(),
        q: data.y.ncols(),
    };
    Ok((train_corr, test_corr, mf))
}

fn alignment_summary(mf: &ModelFile) -> serde_json::Value {
    let (sx, sy) = mf.model.pair.support_columns();
    json!({
        "objective": mf.model.pair.objective,
        "iterations": mf.model.pair.iterations,
        "converged": mf.model.pair.converged,
        "params": mf.model.pair.params,
        "selected_x": sx.len(),
        "selected_y": sy.len(),
        "selected_x_share": sx.len() as f64 / mf.p as f64,
        "selected_y_share": sy.len() as f64 / mf.q as f64,
    })
}

pub fn run(ctx: &Ctx, cmd: &SccaCmd) -> Result<()> {
    match cmd {
        SccaCmd::Fit(a) => run_fit(ctx, a),
        SccaCmd::Cv(a) => run_cv(ctx, a),
        SccaCmd::Eval(a) => run_eval(ctx, a),
    }
}

fn run_fit(ctx: &Ctx, args: &SccaArgs) -> Result<()> {
    let path = ["scca", "fit"];
    let cfg: SccaConfig = resolve(ctx.file, &path, args)?;
    let (x, y) = (require(&cfg.x, "x")?, require(&cfg.y, "y")?);
    let params = cfg.params(*require(&cfg.c1, "c1")?, *require(&cfg.c2, "c2")?);
    let data = load_pair(x, y)?;
    let s = split(&data, cfg.seed)?;
    let all: Vec<usize> = (0..s.train.len()).collect();
    let model = selection::fit_model(&s.x_train, &s.y_train, &all, &params, cfg.init()?)?;
    let dir = out_dir(&cfg.out)?;
    let (train_corr, test_corr, mf) = emit_model(&dir, &data, &s, model)?;
    let prov = Provenance::new(&path, &cfg, Some(cfg.seed), &[x.as_path(), y.as_path()])?;
    let summary = alignment_summary(&mf);
    write_report(&dir.join("model.json"), &prov, json!({ "model_file": mf }))?;
    write_report(
        &dir.join("scca_report.json"),
        &prov,
        json!({
            "train_correlation": train_corr,
            "test_correlation": test_corr,
            "alignment": summary,
        }),
    )
}

fn run_cv(ctx: &Ctx, args: &SccaArgs) -> Result<()> {
    let path = ["scca", "cv"];
    let cfg: SccaConfig = resolve(ctx.file, &path, args)?;
    let (x, y) = (require(&cfg.x, "x")?, require(&cfg.y, "y")?);
    let data = load_pair(x, y)?;
    let grid = match &cfg.grid {
        Some(g) => load_grid(g, &cfg)?,
        None => selection::default_grid(data.x.ncols(), data.y.ncols(), cfg.grid_side)
            .into_iter()
            .map(|p| cfg.params(p.c1, p.c2))
            .collect(),
    };
    let s = split(&data, cfg.seed)?;
    let outcome = selection::cv_grid_search(&s.x_train, &s.y_train, &grid, cfg.folds, cfg.seed, cfg.init()?)?;
    let dir = out_dir(&cfg.out)?;
    let mut report = outcome.report;
    std::fs::write(dir.join("cv_surface.csv"), report.surface_csv()).context("writing cv_surface.csv")?;
    let (_, test_corr, mf) = emit_model(&dir, &data, &s, outcome.model)?;
    report.test_correlation = test_corr;
    let mut inputs = vec![x.as_path(), y.as_path()];
    if let Some(g) = &cfg.grid {
        inputs.push(g.as_path());
    }
    let prov = Provenance::new(&path, &cfg, Some(cfg.seed), &inputs)?;
    let summary = alignment_summary(&mf);
    write_report(&dir.join("model.json"), &prov, json!({ "model_file": mf }))?;
    write_report(&dir.join("scca_report.json"), &prov, json!({ "cv": report, "alignment": summary }))
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// model.json written by `scca fit` or `scca cv`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model: Option<PathBuf>,
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn run_eval(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let path = ["scca", "eval"];
    let cfg: EvalConfig = resolve(ctx.file, &path, args)?;
    let (m, x, y) = (require(&cfg.model, "model")?, require(&cfg.x, "x")?, require(&cfg.y, "y")?);
    let mf = ModelFile::load(m)?;
    let data = load_pair(x, y)?;
    let (sx, sy) = mf.model.scores(data.x.data(), data.y.data())?;
    let corr = hdpair_core::cca::canonical_correlation(&sx, &sy).ok();
    let dir = out_dir(cfg.out.as_deref().unwrap_or(Path::new("scca_eval")))?;
    write_projections(&dir.join("projections.csv"), &[("eval", data.x.subject_ids().to_vec(), sx, sy)])?;
    let prov = Provenance::new(&path, &cfg, None, &[m.as_path(), x.as_path(), y.as_path()])?;
    write_report(&dir.join("eval.json"), &prov, json!({ "n": data.n(), "correlation": corr }))
}
