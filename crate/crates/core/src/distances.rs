//! Inter-subject distance functions and symmetric distance matrices.
//!
//! Metrics are trait objects looked up by name in a [`MetricRegistry`], so
//! the CLI and the inference code can select them from configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixio::{write_bin, BinReader, FeatureMatrix};

pub const SCALED_EUCLIDEAN: &str = "scaled_euclidean";
pub const PEARSON_DISTANCE: &str = "pearson_correlation_distance";
pub const EUCLIDEAN: &str = "euclidean";

/// A dissimilarity between two equal-length feature vectors.
pub trait Metric: Send + Sync {
    fn name(&self) -> &'static str;

    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64>;

    /// Whether the metric obeys the triangle inequality.
    fn is_metric(&self) -> bool {
        true
    }
}

/// Euclidean distance divided by the vector length.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScaledEuclidean;

/// One minus the Pearson correlation of the two vectors' entries.
#[derive(Debug, Clone, Copy, Default)]
pub struct PearsonDistance;

#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

fn check_lengths(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("vector lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < min {
        return Err(Error::InvalidParameter(format!(
            "vectors need at least {min} entries, got {}",
            a.len()
        )));
    }
    Ok(())
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

impl Metric for ScaledEuclidean {
    fn name(&self) -> &'static str {
        SCALED_EUCLIDEAN
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_lengths(a, b, 1)?;
        Ok(squared_euclidean(a, b).sqrt() / a.len() as f64)
    }
}

impl Metric for Euclidean {
    fn name(&self) -> &'static str {
        EUCLIDEAN
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_lengths(a, b, 1)?;
        Ok(squared_euclidean(a, b).sqrt())
    }
}

impl Metric for PearsonDistance {
    fn name(&self) -> &'static str {
        PEARSON_DISTANCE
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_lengths(a, b, 2)?;
        let rho = crate::stats::pearson(a, b)?;
        Ok(1.0 - rho)
    }

    fn is_metric(&self) -> bool {
        false
    }
}

pub fn d_x(x: &[f64], x2: &[f64]) -> Result<f64> {
    ScaledEuclidean.distance(x, x2)
}

pub fn d_y(y: &[f64], y2: &[f64]) -> Result<f64> {
    PearsonDistance.distance(y, y2)
}

/// Name-keyed table of available metrics.
pub struct MetricRegistry {
    metrics: BTreeMap<&'static str, Box<dyn Metric>>,
}

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut r = MetricRegistry {
            metrics: BTreeMap::new(),
        };
        r.register(Box::new(ScaledEuclidean));
        r.register(Box::new(PearsonDistance));
        r.register(Box::new(Euclidean));
        r
    }
}

impl MetricRegistry {
    pub fn register(&mut self, metric: Box<dyn Metric>) {
        self.metrics.insert(metric.name(), metric);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Metric> {
        self.metrics.get(name).map(|m| m.as_ref()).ok_or_else(|| Error::UnknownStrategy {
            kind: "metric",
            name: name.to_string(),
            available: self.names(),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.metrics.keys().map(|s| s.to_string()).collect()
    }
}

/// Symmetric `n × n` matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    data: DMatrix<f64>,
    metric: String,
    subject_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DistanceSidecar {
    pub metric_tag: String,
    pub n: usize,
}

impl DistanceMatrix {
    /// Wrap an existing matrix after checking symmetry and the diagonal.
    pub fn from_matrix(data: DMatrix<f64>, metric: impl Into<String>, subject_ids: Vec<String>) -> Result<Self> {
        let n = data.nrows();
        if data.ncols() != n || subject_ids.len() != n {
            return Err(Error::Dimension(format!(
                "distance matrix {}x{} with {} ids",
                n,
                data.ncols(),
                subject_ids.len()
            )));
        }
        for i in 0..n {
            if data[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (data[(i, j)], data[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::InvalidParameter(format!("asymmetric or non-finite entry at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix {
            data,
            metric: metric.into(),
            subject_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    /// Upper-triangle entries `(i, j), i < j`, in lexicographic order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.data[(i, j)]);
            }
        }
        out
    }

    /// `P D Pᵀ`: entry `(i, j)` of the result is `D[perm[i], perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> DistanceMatrix {
        self.submatrix(perm)
    }

    /// Rows and columns picked (and possibly repeated) by `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> DistanceMatrix {
        let m = idx.len();
        let data = DMatrix::from_fn(m, m, |a, b| self.data[(idx[a], idx[b])]);
        DistanceMatrix {
            data,
            metric: self.metric.clone(),
            subject_ids: idx.iter().map(|&i| self.subject_ids[i].clone()).collect(),
        }
    }

    /// Binary matrix at `path` plus a `<path>.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_bin(path, &self.data, &self.subject_ids)?;
        let side = DistanceSidecar {
            metric_tag: self.metric.clone(),
            n: self.n(),
        };
        let sp = sidecar_path(path);
        let text = serde_json::to_string_pretty(&side).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(&sp, text).map_err(|e| Error::io(&sp, e))
    }

    pub fn load(path: &Path) -> Result<DistanceMatrix> {
        let sp = sidecar_path(path);
        let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
        let side: DistanceSidecar = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut r = BinReader::open(path)?;
        let data = r.read_rows(0, r.nrows())?;
        let ids = r.read_ids()?;
        if side.n != data.nrows() {
            return Err(Error::Parse(format!("sidecar says n={}, matrix has {}", side.n, data.nrows())));
        }
        DistanceMatrix::from_matrix(data, side.metric_tag, ids)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// All pairwise distances between the rows of `m`.
///
/// Each entry is one sequential metric evaluation, so the result does not
/// depend on how rows are spread across threads.
pub fn distance_matrix(m: &FeatureMatrix, metric: &dyn Metric) -> Result<DistanceMatrix> {
    let rows = m.rows();
    let n = rows.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    metric.distance(&rows[i], &rows[j]).map_err(|e| pair_error(e, m.subject_ids(), i, j))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(upper, metric.name(), m.subject_ids().to_vec()))
}

/// Row-chunked variant reading from the binary format; only two blocks of
/// `chunk_rows` rows are resident at a time. Produces the same matrix as
/// [`distance_matrix`] bit for bit.
pub fn distance_matrix_streaming(path: &Path, metric: &dyn Metric, chunk_rows: usize) -> Result<DistanceMatrix> {
    if chunk_rows == 0 {
        return Err(Error::InvalidParameter("chunk_rows must be positive".into()));
    }
    let mut reader = BinReader::open(path)?;
    let n = reader.nrows();
    let ids = reader.read_ids()?;
    let mut upper: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; n - i - 1]).collect();
    let starts: Vec<usize> = (0..n).step_by(chunk_rows).collect();
    for (bi, &a0) in starts.iter().enumerate() {
        let a_len = chunk_rows.min(n - a0);
        let block_a = crate::matrixio::row_major(&reader.read_rows(a0, a_len)?);
        for &b0 in &starts[bi..] {
            let b_len = chunk_rows.min(n - b0);
            let block_b = if b0 == a0 {
                block_a.clone()
            } else {
                crate::matrixio::row_major(&reader.read_rows(b0, b_len)?)
            };
            let cells: Vec<(usize, Vec<(usize, f64)>)> = (0..a_len)
                .into_par_iter()
                .map(|ia| {
                    let i = a0 + ia;
                    let mut row = Vec::new();
                    for (jb, rb) in block_b.iter().enumerate() {
                        let j = b0 + jb;
                        if j > i {
                            let d = metric
                                .distance(&block_a[ia], rb)
                                .map_err(|e| pair_error(e, &ids, i, j))?;
                            row.push((j, d));
                        }
                    }
                    Ok((i, row))
                })
                .collect::<Result<Vec<_>>>()?;
            for (i, row) in cells {
                for (j, d) in row {
                    upper[i][j - i - 1] = d;
                }
            }
        }
    }
    Ok(assemble(upper, metric.name(), ids))
}

fn assemble(upper: Vec<Vec<f64>>, metric: &str, ids: Vec<String>) -> DistanceMatrix {
    let n = upper.len();
    let mut data = DMatrix::zeros(n, n);
    for (i, row) in upper.into_iter().enumerate() {
        for (k, d) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            data[(i, j)] = d;
            data[(j, i)] = d;
        }
    }
    DistanceMatrix {
        data,
        metric: metric.to_string(),
        subject_ids: ids,
    }
}

fn pair_error(e: Error, ids: &[String], i: usize, j: usize) -> Error {
    Error::Degenerate(format!("distance between {:?} and {:?}: {e}", ids[i], ids[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, p: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMatrix::anonymous(DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0), "X").unwrap()
    }

    #[test]
    fn scaled_euclidean_examples() {
        let x = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(d_x(&x, &x).unwrap(), 0.0);
        assert_eq!(d_x(&x, &[0.0, 1.0, 0.0, 0.0]).unwrap(), 2f64.sqrt() / 4.0);
        assert!(matches!(d_x(&x, &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn scaled_euclidean_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let mut s = 0.0;
        for k in 0..1000 {
            s += (a[k] - b[k]) * (a[k] - b[k]);
        }
        let oracle = s.sqrt() / 1000.0;
        assert!((d_x(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn pearson_distance_examples() {
        let y = [0.3, -1.2, 2.5, 0.7, 1.1];
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let triple: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        assert_eq!(d_y(&y, &y).unwrap(), 0.0);
        assert_eq!(d_y(&y, &neg).unwrap(), 2.0);
        assert!(d_y(&y, &triple).unwrap().abs() < 1e-15);
        assert!(matches!(d_y(&y, &[1.0; 5]), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn single_subject_matrix() {
        let m = random_matrix(1, 5, 1);
        let d = distance_matrix(&m, &ScaledEuclidean).unwrap();
        assert_eq!(d.data(), &DMatrix::zeros(1, 1));
    }

    #[test]
    fn duplicate_rows_have_zero_distance() {
        let mut data = random_matrix(4, 6, 2).into_data();
        let r0 = data.row(0).into_owned();
        data.set_row(2, &r0);
        let m = FeatureMatrix::anonymous(data, "X").unwrap();
        for name in [SCALED_EUCLIDEAN, PEARSON_DISTANCE, EUCLIDEAN] {
            let reg = MetricRegistry::default();
            let d = distance_matrix(&m, reg.get(name).unwrap()).unwrap();
            assert_eq!(d.get(0, 2), 0.0, "{name}");
        }
    }

    #[test]
    fn matrix_matches_double_loop() {
        let m = random_matrix(20, 50, 3);
        let rows = m.rows();
        let reg = MetricRegistry::default();
        for name in reg.names() {
            let metric = reg.get(&name).unwrap();
            let d = distance_matrix(&m, metric).unwrap();
            for i in 0..20 {
                assert_eq!(d.get(i, i), 0.0);
                for j in (i + 1)..20 {
                    let e = metric.distance(&rows[i], &rows[j]).unwrap();
                    assert!((d.get(i, j) - e).abs() < 1e-12);
                    assert_eq!(d.get(i, j), d.get(j, i));
                }
            }
        }
    }

    #[test]
    fn matrix_error_names_pair() {
        let mut data = random_matrix(3, 4, 4).into_data();
        data.set_row(1, &nalgebra::RowDVector::from_element(4, 2.0));
        let m = FeatureMatrix::anonymous(data, "Y").unwrap();
        let err = distance_matrix(&m, &PearsonDistance).unwrap_err().to_string();
        assert!(err.contains("\"s0\"") && err.contains("\"s1\""), "{err}");
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let m = random_matrix(30, 40, 5);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| distance_matrix(&m, &PearsonDistance).unwrap());
        let b = four.install(|| distance_matrix(&m, &PearsonDistance).unwrap());
        assert!(a.data().iter().zip(b.data().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn streaming_matches_in_memory() {
        let m = random_matrix(11, 9, 6);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        m.save(&p, crate::matrixio::Format::Bin).unwrap();
        let full = distance_matrix(&m, &ScaledEuclidean).unwrap();
        for chunk in [1, 3, 4, 11, 20] {
            let s = distance_matrix_streaming(&p, &ScaledEuclidean, chunk).unwrap();
            assert_eq!(s, full, "chunk {chunk}");
        }
    }

    #[test]
    fn save_load_with_sidecar() {
        let m = random_matrix(6, 3, 8);
        let d = distance_matrix(&m, &Euclidean).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        d.save(&p).unwrap();
        let side: DistanceSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        assert_eq!(side, DistanceSidecar { metric_tag: EUCLIDEAN.into(), n: 6 });
        assert_eq!(DistanceMatrix::load(&p).unwrap(), d);
    }

    #[test]
    fn unknown_metric_lists_names() {
        let reg = MetricRegistry::default();
        match reg.get("cosine") {
            Err(Error::UnknownStrategy { available, .. }) => assert_eq!(available.len(), 3),
            _ => panic!(),
        }
    }

    proptest! {
        #[test]
        fn scaled_euclidean_triangle_inequality(seed in any::<u64>()) {
            let m = random_matrix(3, 7, seed);
            let r = m.rows();
            let (ab, bc, ac) = (d_x(&r[0], &r[1]).unwrap(), d_x(&r[1], &r[2]).unwrap(), d_x(&r[0], &r[2]).unwrap());
            prop_assert!(ac <= ab + bc + 1e-15);
        }

        #[test]
        fn pearson_distance_basic_properties(seed in any::<u64>()) {
            let m = random_matrix(2, 8, seed);
            let r = m.rows();
            let d = d_y(&r[0], &r[1]).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
            prop_assert_eq!(d, d_y(&r[1], &r[0]).unwrap());
            prop_assert_eq!(d_y(&r[0], &r[0]).unwrap(), 0.0);
        }

        #[test]
        fn relabeling_permutes_matrix(perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(), seed in any::<u64>()) {
            let m = random_matrix(8, 5, seed);
            let d = distance_matrix(&m, &ScaledEuclidean).unwrap();
            let pm = m.select_rows(&perm);
            let dp = distance_matrix(&pm, &ScaledEuclidean).unwrap();
            let expected = d.permuted(&perm);
            prop_assert_eq!(dp.data(), expected.data());
        }
    }
}
