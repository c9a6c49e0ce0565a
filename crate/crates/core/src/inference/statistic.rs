//! The distance-pair correlation: Pearson correlation between the upper
//! triangles of two distance matrices.

use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};

fn check_pair(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<()> {
    if dx.n() != dy.n() {
        return Err(Error::Dimension(format!("distance matrices of size {} and {}", dx.n(), dy.n())));
    }
    if dx.subject_ids() != dy.subject_ids() {
        return Err(Error::InvalidParameter("distance matrices list subjects in different orders".into()));
    }
    if dx.n() < 3 {
        return Err(Error::InvalidParameter(format!("need n >= 3 subjects, got {}", dx.n())));
    }
    Ok(())
}

/// Pearson correlation over all pairs `i < j`.
pub fn distance_pair_correlation(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<f64> {
    check_pair(dx, dy)?;
    Ok(TriangleCorrelation::new(dx, dy)?.observed())
}

/// Precomputed centered triangles so that permuted statistics cost one
/// pass over the pairs. Permuting subjects only reorders the entries of
/// `D^X`, so both sums of squares in the denominator are computed once.
#[derive(Debug, Clone)]
pub struct TriangleCorrelation {
    n: usize,
    /// Row-major `n × n`, off-diagonal entries centered by the triangle mean.
    centered_x: Vec<f64>,
    centered_y: Vec<f64>,
    denom: f64,
}

impl TriangleCorrelation {
    pub fn new(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<Self> {
        check_pair(dx, dy)?;
        let n = dx.n();
        let (cx, ssx) = centered(dx);
        let (cy, ssy) = centered(dy);
        if !(ssx > 0.0) {
            return Err(Error::ZeroVariance("D^X upper triangle is constant".into()));
        }
        if !(ssy > 0.0) {
            return Err(Error::ZeroVariance("D^Y upper triangle is constant".into()));
        }
        Ok(TriangleCorrelation {
            n,
            centered_x: cx,
            centered_y: cy,
            denom: (ssx * ssy).sqrt(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Statistic with the rows and columns of `D^X` relabeled by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> f64 {
        let n = self.n;
        debug_assert_eq!(perm.len(), n);
        let mut num = 0.0;
        for i in 0..n {
            let xrow = &self.centered_x[perm[i] * n..perm[i] * n + n];
            let yrow = &self.centered_y[i * n..i * n + n];
            for j in (i + 1)..n {
                num += xrow[perm[j]] * yrow[j];
            }
        }
        num / self.denom
    }

    pub fn observed(&self) -> f64 {
        let id: Vec<usize> = (0..self.n).collect();
        self.permuted(&id)
    }
}

/// Centered sum of squares of a distance matrix's upper triangle.
pub fn centered_sum_of_squares(d: &DistanceMatrix) -> f64 {
    centered(d).1
}

fn centered(d: &DistanceMatrix) -> (Vec<f64>, f64) {
    let n = d.n();
    let tri = d.upper_triangle();
    let mean = tri.iter().sum::<f64>() / tri.len() as f64;
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                c[i * n + j] = d.get(i, j) - mean;
            }
        }
    }
    let ss = tri.iter().map(|v| (v - mean) * (v - mean)).sum();
    (c, ss)
}

/// Flatten-and-correlate; used on resampled matrices where duplicated
/// subjects may make a triangle constant.
pub(crate) fn triangle_pearson(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<f64> {
    crate::stats::pearson(&dx.upper_triangle(), &dy.upper_triangle())
}
