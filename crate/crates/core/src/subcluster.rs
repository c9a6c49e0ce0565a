//! Complete-linkage clustering of selected features and canonical
//! correlation between every pair of x/y subclusters.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::{self, CcaData};
use crate::distances::{distance_matrix, DistanceMatrix, Metric};
use crate::error::{Error, Result};
use crate::matrixio::{FeatureMatrix, Standardizer};

pub const DEFAULT_CLUSTERS: usize = 5;
pub const DEFAULT_TOP: usize = 3;

/// Distances between the columns of `m` (features as points, rows as
/// coordinates).
pub fn feature_distance_matrix(m: &DMatrix<f64>, metric: &dyn Metric) -> Result<DistanceMatrix> {
    if m.ncols() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 features, got {}", m.ncols())));
    }
    let ids = (0..m.ncols()).map(|j| format!("f{j}")).collect();
    distance_matrix(&FeatureMatrix::new(m.transpose(), ids, "features")?, metric)
}

/// One agglomeration step. Clusters are named by their smallest member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureClustering {
    /// Columns of the original matrix these features came from.
    pub feature_indices: Vec<usize>,
    /// 1..=k, numbered in order of each cluster's smallest member.
    pub labels: Vec<usize>,
    pub k: usize,
    pub linkage: String,
    pub metric_tag: String,
    pub merges: Vec<Merge>,
}

impl FeatureClustering {
    /// Positions (into `feature_indices`) belonging to cluster `label`.
    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

/// Full complete-linkage merge sequence. At each step the pair with the
/// smallest `(distance, a, b)` (a < b) is merged.
pub fn complete_linkage_dendrogram(d: &DistanceMatrix) -> Vec<Merge> {
    let f = d.n();
    let mut dist = d.data().clone();
    let mut active = vec![true; f];
    let mut size = vec![1usize; f];
    // Nearest active partner with a larger index, per row.
    let row_min = |dist: &DMatrix<f64>, active: &[bool], i: usize| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for j in i + 1..f {
            if active[j] && best.is_none_or(|(bd, _)| dist[(i, j)] < bd) {
                best = Some((dist[(i, j)], j));
            }
        }
        best
    };
    let mut nn: Vec<Option<(f64, usize)>> = (0..f).map(|i| row_min(&dist, &active, i)).collect();
    let mut merges = Vec::with_capacity(f.saturating_sub(1));
    for _ in 1..f {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in 0..f {
            if !active[i] {
                continue;
            }
            if let Some((dd, j)) = nn[i] {
                if pick.is_none_or(|(pd, pi, pj)| (dd, i, j) < (pd, pi, pj)) {
                    pick = Some((dd, i, j));
                }
            }
        }
        let Some((dd, a, b)) = pick else { break };
        active[b] = false;
        size[a] += size[b];
        for m in 0..f {
            if active[m] && m != a {
                let v = dist[(a, m)].max(dist[(b, m)]);
                dist[(a, m)] = v;
                dist[(m, a)] = v;
            }
        }
        merges.push(Merge {
            a,
            b,
            distance: dd,
            size: size[a],
        });
        nn[b] = None;
        for m in 0..f {
            if !active[m] {
                continue;
            }
            let stale = m == a || matches!(nn[m], Some((_, j)) if j == a || j == b);
            if stale {
                nn[m] = row_min(&dist, &active, m);
            }
        }
    }
    merges
}

/// Cut the complete-linkage dendrogram at `k` clusters.
pub fn complete_linkage(d: &DistanceMatrix, k: usize) -> Result<FeatureClustering> {
    let f = d.n();
    if k == 0 || k > f {
        return Err(Error::InvalidParameter(format!("k = {k} clusters for {f} features")));
    }
    let merges = complete_linkage_dendrogram(d);
    let mut root: Vec<usize> = (0..f).collect();
    for m in &merges[..f - k] {
        for r in root.iter_mut() {
            if *r == m.b {
                *r = m.a;
            }
        }
    }
    let mut roots: Vec<usize> = root.clone();
    roots.sort_unstable();
    roots.dedup();
    let labels = root.iter().map(|r| roots.binary_search(r).expect("root listed") + 1).collect();
    Ok(FeatureClustering {
        feature_indices: (0..f).collect(),
        labels,
        k,
        linkage: "complete".into(),
        metric_tag: d.metric().to_string(),
        merges,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub x_cluster: usize,
    pub y_cluster: usize,
    pub correlation: f64,
    pub x_features: Vec<usize>,
    pub y_features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclusterPairRanking {
    /// Every evaluated pair, highest correlation first.
    pub pairs: Vec<PairScore>,
    pub top_k_reported: usize,
    pub notes: Vec<String>,
}

impl SubclusterPairRanking {
    pub fn top(&self) -> &[PairScore] {
        &self.pairs[..self.top_k_reported.min(self.pairs.len())]
    }
}

/// Unregularized canonical correlation for every (x-cluster, y-cluster)
/// pair. `x_sel` / `y_sel` hold the clustered columns (training rows) in
/// the order of the clusterings' features.
pub fn subcluster_cca(
    x_sel: &DMatrix<f64>,
    y_sel: &DMatrix<f64>,
    cx: &FeatureClustering,
    cy: &FeatureClustering,
    top_k: usize,
) -> Result<SubclusterPairRanking> {
    if x_sel.nrows() != y_sel.nrows() {
        return Err(Error::Dimension(format!("x has {} rows, y has {}", x_sel.nrows(), y_sel.nrows())));
    }
    if x_sel.ncols() != cx.labels.len() || y_sel.ncols() != cy.labels.len() {
        return Err(Error::Dimension("clustering does not match the selected columns".into()));
    }
    let mut notes = Vec::new();
    let prep = |m: &DMatrix<f64>, c: &FeatureClustering, side: &str, notes: &mut Vec<String>| {
        let mut out = Vec::new();
        for label in 1..=c.k {
            let cols = c.members(label);
            if cols.is_empty() {
                notes.push(format!("{side} cluster {label} is empty"));
                continue;
            }
            let sub = m.select_columns(&cols);
            match Standardizer::fit(&sub).and_then(|s| s.apply(&sub)).and_then(|z| CcaData::new(&z)) {
                Ok(d) => out.push((label, cols.iter().map(|&i| c.feature_indices[i]).collect::<Vec<_>>(), d)),
                Err(e) => notes.push(format!("{side} cluster {label} skipped: {e}")),
            }
        }
        out
    };
    let xs = prep(x_sel, cx, "x", &mut notes);
    let ys = prep(y_sel, cy, "y", &mut notes);
    let jobs: Vec<(usize, usize)> = (0..xs.len()).flat_map(|a| (0..ys.len()).map(move |b| (a, b))).collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(a, b)| cca::fit_cca_data(&xs[a].2, &ys[b].2).map(|p| p.objective.clamp(-1.0, 1.0)))
        .collect();
    let mut pairs = Vec::new();
    for (&(a, b), r) in jobs.iter().zip(results) {
        match r {
            Ok(c) => pairs.push(PairScore {
                x_cluster: xs[a].0,
                y_cluster: ys[b].0,
                correlation: c,
                x_features: xs[a].1.clone(),
                y_features: ys[b].1.clone(),
            }),
            Err(e) => notes.push(format!("pair ({}, {}) skipped: {e}", xs[a].0, ys[b].0)),
        }
    }
    pairs.sort_by(|p, q| {
        q.correlation
            .total_cmp(&p.correlation)
            .then(p.x_cluster.cmp(&q.x_cluster))
            .then(p.y_cluster.cmp(&q.y_cluster))
    });
    Ok(SubclusterPairRanking {
        pairs,
        top_k_reported: top_k,
        notes,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::distances::{Euclidean, PearsonDistance, ScaledEuclidean};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut r) })
    }

    /// Textbook agglomeration: recompute every inter-cluster distance from
    /// the original matrix at every step.
    pub(crate) fn naive_dendrogram(d: &DMatrix<f64>) -> Vec<Merge> {
        let f = d.nrows();
        let mut clusters: Vec<Vec<usize>> = (0..f).map(|i| vec![i]).collect();
        let mut merges = Vec::new();
        while clusters.len() > 1 {
            let mut best: Option<(f64, usize, usize, usize, usize)> = None;
            for x in 0..clusters.len() {
                for y in 0..clusters.len() {
                    let (ia, ib) = (clusters[x][0], clusters[y][0]);
                    if ia >= ib {
                        continue;
                    }
                    let mut dm = f64::NEG_INFINITY;
                    for &p in &clusters[x] {
                        for &q in &clusters[y] {
                            dm = dm.max(d[(p, q)]);
                        }
                    }
                    if best.is_none_or(|(bd, ba, bb, _, _)| (dm, ia, ib) < (bd, ba, bb)) {
                        best = Some((dm, ia, ib, x, y));
                    }
                }
            }
            let (dm, ia, ib, x, y) = best.unwrap();
            let mut merged = clusters[x].clone();
            merged.extend(&clusters[y]);
            merged.sort_unstable();
            let size = merged.len();
            clusters[x] = merged;
            clusters.remove(y);
            merges.push(Merge {
                a: ia,
                b: ib,
                distance: dm,
                size,
            });
        }
        merges
    }

    pub(crate) fn random_instance(f: usize, seed: u64, integer: bool) -> DistanceMatrix {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(f, f);
        let u = Uniform::new(0.0, 1.0).unwrap();
        for i in 0..f {
            for j in i + 1..f {
                // Integer distances force ties and exercise the tie-break.
                let v: f64 = if integer { (u.sample(&mut r) * 4.0f64).floor() + 1.0 } else { u.sample(&mut r) };
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        DistanceMatrix::from_matrix(m, "test", (0..f).map(|i| format!("f{i}")).collect()).unwrap()
    }

    #[test]
    fn feature_distances_examples() {
        let mut m = gaussian(50, 8, 1);
        m.set_column(3, &m.column(1).into_owned());
        let col = m.column(0) * 2.5;
        m.set_column(5, &col);
        let dx = feature_distance_matrix(&m, &ScaledEuclidean).unwrap();
        assert_eq!(dx.get(1, 3), 0.0);
        let dy = feature_distance_matrix(&m, &PearsonDistance).unwrap();
        assert!(dy.get(0, 5).abs() < 1e-12);
        for i in 0..8 {
            for j in 0..8 {
                let (a, b) = (m.column(i), m.column(j));
                let e = (a - b).norm() / 50.0;
                assert!((dx.get(i, j) - e).abs() < 1e-12);
            }
        }
        let mut z = gaussian(10, 3, 2);
        z.column_mut(2).fill(1.0);
        assert!(feature_distance_matrix(&z, &PearsonDistance).is_err());
    }

    #[test]
    fn extreme_k() {
        let d = random_instance(6, 3, false);
        let single = complete_linkage(&d, 6).unwrap();
        assert_eq!(single.labels, vec![1, 2, 3, 4, 5, 6]);
        let one = complete_linkage(&d, 1).unwrap();
        assert!(one.labels.iter().all(|&l| l == 1));
        assert!(complete_linkage(&d, 0).is_err() && complete_linkage(&d, 7).is_err());
    }

    #[test]
    fn two_blobs() {
        let mut pts = gaussian(8, 2, 4) * 0.1;
        for i in [1, 4, 5, 7] {
            pts[(i, 0)] += 10.0;
        }
        let ids = (0..8).map(|i| format!("p{i}")).collect();
        let d = distance_matrix(&FeatureMatrix::new(pts, ids, "pts").unwrap(), &Euclidean).unwrap();
        let c = complete_linkage(&d, 2).unwrap();
        assert_eq!(c.labels, vec![1, 2, 1, 1, 2, 2, 1, 2]);
        assert_eq!(c.merges, naive_dendrogram(d.data()));
    }

    #[test]
    fn matches_naive_oracle() {
        for seed in 0..30 {
            for integer in [false, true] {
                let f = 2 + (seed as usize % 11);
                let d = random_instance(f, seed, integer);
                assert_eq!(complete_linkage_dendrogram(&d), naive_dendrogram(d.data()), "seed {seed}");
            }
        }
    }

    #[test]
    fn duplicated_cluster_ranks_first() {
        let x = gaussian(80, 6, 5);
        let y = DMatrix::from_fn(80, 6, |i, j| if j < 2 { x[(i, j)] } else { gaussian(80, 6, 6)[(i, j)] });
        let cx = FeatureClustering {
            feature_indices: (0..6).collect(),
            labels: vec![1, 1, 2, 2, 3, 3],
            k: 3,
            linkage: "complete".into(),
            metric_tag: "test".into(),
            merges: Vec::new(),
        };
        let ranking = subcluster_cca(&x, &y, &cx, &cx, 3).unwrap();
        assert_eq!((ranking.pairs[0].x_cluster, ranking.pairs[0].y_cluster), (1, 1));
        assert!((ranking.pairs[0].correlation - 1.0).abs() < 1e-8);
        assert_eq!(ranking.pairs.len(), 9);
        assert_eq!(ranking.top().len(), 3);
    }

    #[test]
    fn null_clusters_weakly_correlated() {
        let x = gaussian(400, 15, 7);
        let y = gaussian(400, 15, 8);
        let labels: Vec<usize> = (0..15).map(|i| i % 5 + 1).collect();
        let c = FeatureClustering {
            feature_indices: (0..15).collect(),
            labels,
            k: 5,
            linkage: "complete".into(),
            metric_tag: "test".into(),
            merges: Vec::new(),
        };
        let r = subcluster_cca(&x, &y, &c, &c, 3).unwrap();
        assert_eq!(r.pairs.len(), 25);
        assert!(r.pairs.iter().all(|p| p.correlation < 0.5));
        // Recompute each pair independently.
        for p in &r.pairs {
            let xs = x.select_columns(&c.members(p.x_cluster));
            let ys = y.select_columns(&c.members(p.y_cluster));
            let zx = Standardizer::fit(&xs).unwrap().apply(&xs).unwrap();
            let zy = Standardizer::fit(&ys).unwrap().apply(&ys).unwrap();
            let direct = cca::fit_cca(&zx, &zy).unwrap().objective;
            assert!((direct - p.correlation).abs() < 1e-12);
        }
        for w in r.pairs.windows(2) {
            assert!(w[0].correlation >= w[1].correlation);
        }
    }

    #[test]
    fn cca_dominates_single_pairs() {
        let z = gaussian(60, 1, 9);
        let x = gaussian(60, 4, 10) + DMatrix::from_fn(60, 4, |i, j| z[(i, 0)] * (j as f64 + 1.0) * 0.3);
        let y = gaussian(60, 3, 11) + DMatrix::from_fn(60, 3, |i, _| z[(i, 0)] * 0.5);
        let c4 = FeatureClustering {
            feature_indices: (0..4).collect(),
            labels: vec![1; 4],
            k: 1,
            linkage: "complete".into(),
            metric_tag: "t".into(),
            merges: Vec::new(),
        };
        let c3 = FeatureClustering {
            feature_indices: (0..3).collect(),
            labels: vec![1; 3],
            ..c4.clone()
        };
        let r = subcluster_cca(&x, &y, &c4, &c3, 1).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let pr = crate::stats::pearson(x.column(i).as_slice(), y.column(j).as_slice()).unwrap();
                assert!(r.pairs[0].correlation >= pr.abs() - 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn labels_follow_relabeling(seed in 0u64..10_000, f in 3usize..12, k in 1usize..4) {
            prop_assume!(k <= f);
            let d = random_instance(f, seed, false);
            let base = complete_linkage(&d, k).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let mut perm: Vec<usize> = (0..f).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let moved = complete_linkage(&d.permuted(&perm), k).unwrap();
            // Same partition, possibly renamed: co-membership must agree.
            for a in 0..f {
                for b in 0..f {
                    let same_base = base.labels[perm[a]] == base.labels[perm[b]];
                    let same_moved = moved.labels[a] == moved.labels[b];
                    prop_assert_eq!(same_base, same_moved);
                }
            }
        }
    }
}
