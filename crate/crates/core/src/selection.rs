//! Train/test split, k-fold cross-validated grid search over sparsity
//! parameters, refit and held-out evaluation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::{self, AlignmentPair, CcaData, Init, SccaParams};
use crate::error::{Error, Result};
use crate::matrixio::Standardizer;
use crate::rng::{self, Purpose};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_GRID_SIDE: usize = 8;

/// Uniformly random 5:1 partition with `|train| = ceil(5n/6)`. Both index
/// lists are returned sorted.
pub fn train_test_split(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 12 {
        return Err(Error::InvalidParameter(format!("train/test split needs n >= 12, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, Purpose::Split, 0));
    let n_train = (5 * n).div_ceil(6);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Shuffle and cut into `k` folds; the first `len % k` folds get one extra
/// element. Each fold is sorted.
pub fn kfold_partition(indices: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > indices.len() {
        return Err(Error::InvalidParameter(format!("k = {k} folds for {} indices", indices.len())));
    }
    let mut idx = indices.to_vec();
    idx.shuffle(&mut rng::stream(seed, Purpose::Folds, 0));
    let (base, extra) = (idx.len() / k, idx.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// `side` log-spaced values over `[1, sqrt(dim)]`.
pub fn log_grid(dim: usize, side: usize) -> Vec<f64> {
    let hi = (dim.max(1) as f64).sqrt();
    if side <= 1 || hi <= 1.0 {
        return vec![1.0];
    }
    (0..side)
        .map(|i| (hi.ln() * i as f64 / (side - 1) as f64).exp())
        .collect()
}

/// Cartesian product of the two log grids, c1 varying slowest.
pub fn default_grid(p: usize, q: usize, side: usize) -> Vec<SccaParams> {
    let (g1, g2) = (log_grid(p, side), log_grid(q, side));
    g1.iter()
        .flat_map(|&c1| g2.iter().map(move |&c2| SccaParams::with_sparsity(c1, c2)))
        .collect()
}

/// A fit together with the standardization learned on its training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub pair: AlignmentPair,
    pub std_x: Standardizer,
    pub std_y: Standardizer,
}

impl FittedModel {
    /// Canonical scores of raw rows, standardized with the training
    /// parameters.
    pub fn scores(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let sx = cca::project(&self.std_x.apply(x)?, &self.pair.u)?;
        let sy = cca::project(&self.std_y.apply(y)?, &self.pair.v)?;
        Ok((sx, sy))
    }
}

struct Prepared {
    std_x: Standardizer,
    std_y: Standardizer,
    x: CcaData,
    y: CcaData,
}

fn prepare(x: &DMatrix<f64>, y: &DMatrix<f64>, rows: &[usize]) -> Result<Prepared> {
    let xs = x.select_rows(rows);
    let ys = y.select_rows(rows);
    let std_x = Standardizer::fit(&xs)?;
    let std_y = Standardizer::fit(&ys)?;
    let xd = CcaData::new(&std_x.apply(&xs)?)?;
    let yd = CcaData::new(&std_y.apply(&ys)?)?;
    Ok(Prepared {
        std_x,
        std_y,
        x: xd,
        y: yd,
    })
}

fn fit_prepared(prep: &Prepared, params: &SccaParams, init: Init) -> Result<FittedModel> {
    let mut pair = cca::fit_scca_data(&prep.x, &prep.y, params, init)?;
    pair.columns_x = prep.std_x.retained.clone();
    pair.columns_y = prep.std_y.retained.clone();
    Ok(FittedModel {
        pair,
        std_x: prep.std_x.clone(),
        std_y: prep.std_y.clone(),
    })
}

/// Standardize on `rows` only and fit sparse CCA there.
pub fn fit_model(x: &DMatrix<f64>, y: &DMatrix<f64>, rows: &[usize], params: &SccaParams, init: Init) -> Result<FittedModel> {
    fit_prepared(&prepare(x, y, rows)?, params, init)
}

/// Correlation of held-out canonical scores under the training
/// standardization.
pub fn evaluate_test(fit: &FittedModel, x_test: &DMatrix<f64>, y_test: &DMatrix<f64>) -> Result<f64> {
    let (sx, sy) = fit.scores(x_test, y_test)?;
    cca::canonical_correlation(&sx, &sy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: Vec<(f64, f64)>,
    /// Grid cells × folds; `None` where the fit or evaluation failed.
    pub fold_correlations: Vec<Vec<Option<f64>>>,
    /// Mean over folds; `None` unless every fold succeeded.
    pub mean_validation: Vec<Option<f64>>,
    pub selected: (f64, f64),
    pub selected_index: usize,
    pub k: usize,
    pub train_correlation: f64,
    pub test_correlation: Option<f64>,
    pub seed: u64,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: CvReport,
    /// Refit on every training row at the selected parameters.
    pub model: FittedModel,
}

/// Index of the best mean; ties go to the smaller `c1 + c2`, then the
/// earlier cell.
fn select(grid: &[SccaParams], means: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, m) in means.iter().enumerate() {
        let Some(m) = m else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let bm = means[b].expect("selected cell has a mean");
                let better = *m > bm || (*m == bm && grid[i].c1 + grid[i].c2 < grid[b].c1 + grid[b].c2);
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// k-fold grid search on the training rows `x`, `y` (raw, unstandardized).
/// Every fold is standardized on its fit rows only; validation rows see
/// the fit-set means and sds.
pub fn cv_grid_search(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &[SccaParams],
    k: usize,
    seed: u64,
    init: Init,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty parameter grid".into()));
    }
    for p in grid {
        p.validate()?;
    }
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!("x has {} rows, y has {}", x.nrows(), y.nrows())));
    }
    let n = x.nrows();
    let all: Vec<usize> = (0..n).collect();
    let folds = kfold_partition(&all, k, seed)?;
    if folds.iter().any(|f| n - f.len() < 3) || folds.iter().any(|f| f.len() < 3) {
        return Err(Error::InvalidParameter(format!("{n} training rows are too few for {k} folds")));
    }

    let prepared: Vec<Result<(Prepared, DMatrix<f64>, DMatrix<f64>)>> = folds
        .par_iter()
        .map(|fold| {
            let fit_rows: Vec<usize> = all.iter().copied().filter(|i| fold.binary_search(i).is_err()).collect();
            let prep = prepare(x, y, &fit_rows)?;
            let xv = prep.std_x.apply(&x.select_rows(fold))?;
            let yv = prep.std_y.apply(&y.select_rows(fold))?;
            Ok((prep, xv, yv))
        })
        .collect();

    let mut diagnostics = Vec::new();
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let results: Vec<std::result::Result<f64, String>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (prep, xv, yv) = prepared[f].as_ref().map_err(|e| format!("fold {f}: {e}"))?;
            let fit = fit_prepared(prep, &grid[c], init).map_err(|e| e.to_string())?;
            let sx = cca::project(xv, &fit.pair.u).map_err(|e| e.to_string())?;
            let sy = cca::project(yv, &fit.pair.v).map_err(|e| e.to_string())?;
            cca::canonical_correlation(&sx, &sy).map_err(|e| e.to_string())
        })
        .collect();

    let mut fold_correlations = vec![vec![None; k]; grid.len()];
    for (&(c, f), r) in jobs.iter().zip(&results) {
        match r {
            Ok(v) => fold_correlations[c][f] = Some(*v),
            Err(e) => diagnostics.push(format!("cell {c} (c1={}, c2={}) fold {f}: {e}", grid[c].c1, grid[c].c2)),
        }
    }
    let mean_validation: Vec<Option<f64>> = fold_correlations
        .iter()
        .map(|row| {
            let vals: Option<Vec<f64>> = row.iter().copied().collect();
            vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    let Some(sel) = select(grid, &mean_validation) else {
        return Err(Error::Degenerate(format!("every grid cell failed: {}", diagnostics.join("; "))));
    };

    let model = fit_model(x, y, &all, &grid[sel], init)?;
    let train_correlation = evaluate_test(&model, x, y)?;
    let report = CvReport {
        grid: grid.iter().map(|p| (p.c1, p.c2)).collect(),
        fold_correlations,
        mean_validation,
        selected: (grid[sel].c1, grid[sel].c2),
        selected_index: sel,
        k,
        train_correlation,
        test_correlation: None,
        seed,
        diagnostics,
    };
    Ok(CvOutcome { report, model })
}

impl CvReport {
    /// `c1,c2,mean_validation` rows for plotting the CV surface.
    pub fn surface_csv(&self) -> String {
        let mut s = String::from("c1,c2,mean_validation\n");
        for ((c1, c2), m) in self.grid.iter().zip(&self.mean_validation) {
            let m = m.map(|v| format!("{v:?}")).unwrap_or_default();
            s.push_str(&format!("{c1:?},{c2:?},{m}\n"));
        }
        s
    }
}
