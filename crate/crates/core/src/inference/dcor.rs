//! Bias-corrected distance correlation and its t-test of independence.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::distances::{distance_matrix, DistanceMatrix, Euclidean};
use crate::error::{Error, Result};
use crate::matrixio::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcorResult {
    pub bias_corrected_r: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// Upper tail of Student's t.
    pub p_value: f64,
}

/// U-centered distance matrix; the diagonal is zero.
pub fn ucenter(d: &DistanceMatrix) -> Result<DMatrix<f64>> {
    let n = d.n();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("U-centering needs n >= 4, got {n}")));
    }
    let a = d.data();
    let row: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let col: Vec<f64> = (0..n).map(|j| a.column(j).iter().sum()).collect();
    let total: f64 = row.iter().sum();
    let (n1, n2) = ((n - 1) as f64, (n - 2) as f64);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            a[(i, j)] - row[i] / n2 - col[j] / n2 + total / (n1 * n2)
        }
    }))
}

/// `Σ_{i≠j} A_ij B_ij / (n (n - 3))`.
pub fn u_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * b[(i, j)];
            }
        }
    }
    s / (n as f64 * (n as f64 - 3.0))
}

/// Bias-corrected distance correlation from two distance matrices.
pub fn bias_corrected_dcor(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<f64> {
    if dx.n() != dy.n() {
        return Err(Error::Dimension(format!("distance matrices of size {} and {}", dx.n(), dy.n())));
    }
    let (ux, uy) = (ucenter(dx)?, ucenter(dy)?);
    let xy = u_inner(&ux, &uy);
    let xx = u_inner(&ux, &ux);
    let yy = u_inner(&uy, &uy);
    if !(xx > 0.0) || !(yy > 0.0) {
        return Err(Error::Degenerate("U-centered distance variance is not positive".into()));
    }
    Ok(xy / (xx * yy).sqrt())
}

/// t-test built on the bias-corrected statistic with `v - 1` degrees of
/// freedom, `v = n(n-3)/2`.
pub fn dcor_ttest_from_distances(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<DcorResult> {
    let n = dx.n() as f64;
    let r = bias_corrected_dcor(dx, dy)?;
    let v = n * (n - 3.0) / 2.0;
    let df = v - 1.0;
    let t = if r * r >= 1.0 {
        f64::INFINITY.copysign(r)
    } else {
        df.sqrt() * r / (1.0 - r * r).sqrt()
    };
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let p_value = if t == f64::INFINITY {
        0.0
    } else if t == f64::NEG_INFINITY {
        1.0
    } else {
        dist.sf(t)
    };
    Ok(DcorResult {
        bias_corrected_r: r,
        t_statistic: t,
        degrees_of_freedom: df,
        p_value,
    })
}

/// Euclidean distances on both modalities, then [`dcor_ttest_from_distances`].
pub fn dcor_ttest(x: &FeatureMatrix, y: &FeatureMatrix) -> Result<DcorResult> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!("{} and {} subjects", x.nrows(), y.nrows())));
    }
    if x.nrows() < 4 {
        return Err(Error::InvalidParameter(format!("dCor t-test needs n >= 4, got {}", x.nrows())));
    }
    let dx = distance_matrix(x, &Euclidean)?;
    let dy = distance_matrix(y, &Euclidean)?;
    dcor_ttest_from_distances(&dx, &dy)
}
