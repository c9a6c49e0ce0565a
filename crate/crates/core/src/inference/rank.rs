//! Rank correlations between the upper triangles of two distance matrices.

use crate::distances::DistanceMatrix;
use crate::error::{Error, Result};
use crate::stats::{average_ranks, pearson};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankCorrelations {
    pub spearman: f64,
    pub kendall: f64,
}

pub fn rank_correlations(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<RankCorrelations> {
    if dx.n() != dy.n() {
        return Err(Error::Dimension(format!("distance matrices of size {} and {}", dx.n(), dy.n())));
    }
    let (a, b) = (dx.upper_triangle(), dy.upper_triangle());
    Ok(RankCorrelations {
        spearman: spearman(&a, &b)?,
        kendall: kendall_tau_b(&a, &b)?,
    })
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Kendall's tau-b in `O(k log k)` (Knight's merge-sort algorithm).
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("lengths {} and {}", a.len(), b.len())));
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::InvalidParameter("need at least 2 pairs".into()));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let xa: Vec<f64> = order.iter().map(|&i| a[i]).collect();
    let mut ys: Vec<f64> = order.iter().map(|&i| b[i]).collect();
    let ties_x = tie_pairs(&run_lengths(&xa, |p, q| xa[p] == xa[q]));
    let ties_xy = tie_pairs(&run_lengths(&xa, |p, q| xa[p] == xa[q] && ys[p] == ys[q]));

    let mut buf = vec![0.0; k];
    let discordant = merge_count(&mut ys, &mut buf);
    let ties_y = tie_pairs(&run_lengths(&ys, |p, q| ys[p] == ys[q]));

    let n0 = (k as u64) * (k as u64 - 1) / 2;
    if ties_x == n0 || ties_y == n0 {
        return Err(Error::ZeroVariance("a triangle is constant".into()));
    }
    let diff = n0 as f64 - ties_x as f64 - ties_y as f64 + ties_xy as f64 - 2.0 * discordant as f64;
    let denom = ((n0 - ties_x) as f64).sqrt() * ((n0 - ties_y) as f64).sqrt();
    Ok((diff / denom).clamp(-1.0, 1.0))
}

fn tie_pairs(runs: &[u64]) -> u64 {
    runs.iter().map(|t| t * (t - 1) / 2).sum()
}

fn run_lengths<T>(v: &[T], same: impl Fn(usize, usize) -> bool) -> Vec<u64> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=v.len() {
        if i == v.len() || !same(i - 1, i) {
            out.push((i - start) as u64);
            start = i;
        }
    }
    out
}

/// Sort ascending, returning the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k2 = k + mid - i;
    buf[k2..k2 + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}
