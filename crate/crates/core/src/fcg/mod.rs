//! Per-subject functional connectivity: nuisance regression, bandpass
//! filtering, pairwise Pearson correlation.

pub mod filter;

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
pub use filter::{design_bandpass, BandpassSpec, FilterMode, Iir};

#[derive(Debug, Clone, PartialEq)]
pub struct RoiTimeSeries {
    data: DMatrix<f64>,
    fs: f64,
    labels: Vec<String>,
}

impl RoiTimeSeries {
    pub fn new(data: DMatrix<f64>, fs: f64) -> Result<Self> {
        let labels = (0..data.ncols()).map(|j| format!("roi{j}")).collect();
        Self::with_labels(data, fs, labels)
    }

    pub fn with_labels(data: DMatrix<f64>, fs: f64, labels: Vec<String>) -> Result<Self> {
        if data.nrows() < 3 {
            return Err(Error::Dimension(format!("need at least 3 timepoints, got {}", data.nrows())));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidParameter(format!("sampling frequency {fs} must be positive")));
        }
        if labels.len() != data.ncols() {
            return Err(Error::Dimension(format!("{} labels for {} ROIs", labels.len(), data.ncols())));
        }
        check_finite(&data)?;
        Ok(RoiTimeSeries { data, fs, labels })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn t(&self) -> usize {
        self.data.nrows()
    }

    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    fn replace(&self, data: DMatrix<f64>) -> RoiTimeSeries {
        RoiTimeSeries {
            data,
            fs: self.fs,
            labels: self.labels.clone(),
        }
    }

    /// T rows × m columns, header row of ROI labels.
    pub fn load_csv(path: &Path, fs: f64) -> Result<Self> {
        let (labels, data) = read_plain_csv(path)?;
        Self::with_labels(data, fs, labels)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_plain_csv(path, &self.labels, &self.data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceMatrix {
    pub data: DMatrix<f64>,
    pub includes_intercept: bool,
}

impl NuisanceMatrix {
    pub fn new(data: DMatrix<f64>, includes_intercept: bool) -> Result<Self> {
        check_finite(&data)?;
        Ok(NuisanceMatrix {
            data,
            includes_intercept,
        })
    }

    pub fn empty(t: usize) -> Self {
        NuisanceMatrix {
            data: DMatrix::zeros(t, 0),
            includes_intercept: false,
        }
    }

    pub fn load_csv(path: &Path, includes_intercept: bool) -> Result<Self> {
        let (_, data) = read_plain_csv(path)?;
        Self::new(data, includes_intercept)
    }

    fn design(&self) -> DMatrix<f64> {
        if self.includes_intercept {
            return self.data.clone();
        }
        let t = self.data.nrows();
        let mut d = DMatrix::from_element(t, self.data.ncols() + 1, 1.0);
        d.columns_mut(1, self.data.ncols()).copy_from(&self.data);
        d
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn read_plain_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let labels: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() != labels.len() {
            return Err(Error::Parse(format!("row {i} has {} fields, expected {}", rec.len(), labels.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {i}, column {j}: {field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            values.push(v);
        }
        rows += 1;
    }
    Ok((labels.clone(), DMatrix::from_row_slice(rows, labels.len(), &values)))
}

fn write_plain_csv(path: &Path, labels: &[String], data: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let werr = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(labels).map_err(werr)?;
    for i in 0..data.nrows() {
        w.write_record(data.row(i).iter().map(|v| format!("{v:?}"))).map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Orthonormal basis of the design by modified Gram-Schmidt with one
/// reorthogonalization pass. Returns the indices of columns whose residual
/// norm collapses relative to their original norm.
fn orthonormal_basis(design: &DMatrix<f64>, tol: f64) -> (Vec<DVector<f64>>, Vec<usize>) {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..design.ncols() {
        let orig = design.column(j).into_owned();
        let norm0 = orig.norm();
        let mut v = orig;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        if norm0 == 0.0 || nv <= tol * norm0 {
            dependent.push(j);
        } else {
            basis.push(v / nv);
        }
    }
    (basis, dependent)
}

fn project_out(basis: &[DVector<f64>], y: &mut DVector<f64>) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(y);
            y.axpy(-c, q, 1.0);
        }
    }
}

/// Replace each ROI column by its OLS residual against `[1 | nuisance]`.
/// Dependent columns are reported as indices into the augmented design
/// (0 is the intercept when it is added here).
pub fn ols_residualize(ts: &RoiTimeSeries, nuisance: &NuisanceMatrix) -> Result<RoiTimeSeries> {
    if nuisance.data.nrows() != ts.t() {
        return Err(Error::Dimension(format!(
            "nuisance has {} rows, time series has {}",
            nuisance.data.nrows(),
            ts.t()
        )));
    }
    let design = nuisance.design();
    if design.ncols() > ts.t() {
        return Err(Error::Dimension(format!("{} regressors for {} timepoints", design.ncols(), ts.t())));
    }
    let (basis, dependent) = orthonormal_basis(&design, 1e-10);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient(dependent));
    }
    let mut out = ts.data.clone();
    for mut col in out.column_iter_mut() {
        let mut y = col.clone_owned();
        project_out(&basis, &mut y);
        col.copy_from(&y);
    }
    Ok(ts.replace(out))
}

/// Filter every column. Zero-phase padding length is three effective
/// impulse lengths.
pub fn butterworth_bandpass(ts: &RoiTimeSeries, spec: &BandpassSpec, mode: FilterMode) -> Result<RoiTimeSeries> {
    let iir = design_bandpass(spec, ts.fs)?;
    let pad = 3 * iir.effective_length();
    let mut out = ts.data.clone();
    for mut col in out.column_iter_mut() {
        let y = filter::apply(&iir, col.as_slice(), mode, pad);
        col.copy_from_slice(&y);
    }
    Ok(ts.replace(out))
}

/// Upper-triangle Pearson correlations, `(0,1), (0,2), ..., (m-2,m-1)`.
pub fn pearson_fcg(ts: &RoiTimeSeries) -> Result<Vec<f64>> {
    let t = ts.t() as f64;
    let m = ts.m();
    let mut unit = Vec::with_capacity(m);
    for (j, col) in ts.data.column_iter().enumerate() {
        let mean = col.sum() / t;
        let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let ss: f64 = c.iter().map(|v| v * v).sum();
        if ss <= 0.0 || !ss.is_finite() {
            return Err(Error::ZeroVariance(format!("ROI column {j}")));
        }
        let s = ss.sqrt();
        unit.push(c.into_iter().map(|v| v / s).collect::<Vec<f64>>());
    }
    let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let r: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
            out.push(r.clamp(-1.0, 1.0));
        }
    }
    Ok(out)
}

/// Residualize, filter, correlate.
pub fn fcg_pipeline(
    ts: &RoiTimeSeries,
    nuisance: &NuisanceMatrix,
    spec: &BandpassSpec,
    mode: FilterMode,
) -> Result<Vec<f64>> {
    let r = ols_residualize(ts, nuisance)?;
    let f = butterworth_bandpass(&r, spec, mode)?;
    pearson_fcg(&f)
}

/// Top-k principal time courses of a T × v voxel matrix after removing
/// each voxel's temporal mean. Columns are unit-norm, signed so their
/// largest-magnitude entry is positive.
pub fn pca_regressors(voxels: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let (t, v) = voxels.shape();
    if k == 0 || k > t.min(v) {
        return Err(Error::InvalidParameter(format!("k={k} must be in 1..={}", t.min(v))));
    }
    let mut c = voxels.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.sum() / t as f64;
        col.add_scalar_mut(-mean);
    }
    // Temporal Gram matrix is T × T; its eigenvectors are the left singular vectors.
    let gram = &c * c.transpose();
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = DMatrix::zeros(t, k);
    for (dst, &src) in order.iter().take(k).enumerate() {
        let mut u = eig.eigenvectors.column(src).into_owned();
        let lead = u.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            u.neg_mut();
        }
        out.set_column(dst, &u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(t: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, m, |_, _| StandardNormal.sample(&mut rng))
    }

    fn sinusoid(f: f64, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(t, 1, |i, _| (2.0 * std::f64::consts::PI * f * i as f64).sin())
    }

    /// Amplitude of the `f` component by least squares on sin/cos.
    fn amplitude(y: &[f64], f: f64, range: std::ops::Range<usize>) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f;
        let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in range {
            let (s, c) = (w * i as f64).sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            ys += y[i] * s;
            yc += y[i] * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        a.hypot(b)
    }

    #[test]
    fn column_equal_to_regressor_vanishes() {
        let n = gaussian(200, 3, 1);
        let mut x = gaussian(200, 2, 2);
        x.set_column(1, &n.column(2));
        let ts = RoiTimeSeries::new(x, 1.0).unwrap();
        let r = ols_residualize(&ts, &NuisanceMatrix::new(n, false).unwrap()).unwrap();
        assert!(r.data().column(1).amax() < 1e-10);
    }

    #[test]
    fn empty_nuisance_centers() {
        let x = gaussian(50, 3, 3);
        let ts = RoiTimeSeries::new(x.clone(), 1.0).unwrap();
        let r = ols_residualize(&ts, &NuisanceMatrix::empty(50)).unwrap();
        for j in 0..3 {
            let mean = x.column(j).mean();
            for i in 0..50 {
                assert!((r.data()[(i, j)] - (x[(i, j)] - mean)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residuals_match_normal_equations() {
        let (t, m, r) = (200, 5, 3);
        let n = gaussian(t, r, 4);
        let x = gaussian(t, m, 5);
        let ts = RoiTimeSeries::new(x.clone(), 1.0).unwrap();
        let nm = NuisanceMatrix::new(n, false).unwrap();
        let res = ols_residualize(&ts, &nm).unwrap();
        // Oracle: beta = (DᵀD)⁻¹ Dᵀ y via Cholesky.
        let d = nm.design();
        let chol = (d.transpose() * &d).cholesky().unwrap();
        let beta = chol.solve(&(d.transpose() * &x));
        let oracle = &x - &d * beta;
        assert!((res.data() - &oracle).amax() < 1e-10);
        for j in 0..d.ncols() {
            let dc = d.column(j);
            let dn = dc.norm() / (t as f64).sqrt();
            for k in 0..m {
                let rc = res.data().column(k);
                let rn = rc.norm() / (t as f64).sqrt();
                assert!((dc.dot(&rc) / (t as f64 * dn * rn)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rank_deficiency_reported() {
        let mut n = gaussian(40, 3, 6);
        let c0 = n.column(0).into_owned();
        n.set_column(2, &(c0 * 2.0));
        let ts = RoiTimeSeries::new(gaussian(40, 2, 7), 1.0).unwrap();
        match ols_residualize(&ts, &NuisanceMatrix::new(n, false).unwrap()) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec![3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_rows_rejected() {
        let ts = RoiTimeSeries::new(gaussian(40, 2, 8), 1.0).unwrap();
        let n = NuisanceMatrix::new(gaussian(39, 1, 9), false).unwrap();
        assert!(matches!(ols_residualize(&ts, &n), Err(Error::Dimension(_))));
    }

    #[test]
    fn residualization_idempotent() {
        let ts = RoiTimeSeries::new(gaussian(120, 4, 10), 1.0).unwrap();
        let nm = NuisanceMatrix::new(gaussian(120, 5, 11), false).unwrap();
        let once = ols_residualize(&ts, &nm).unwrap();
        let twice = ols_residualize(&once, &nm).unwrap();
        assert!((once.data() - twice.data()).amax() < 1e-10);
    }

    #[test]
    fn dc_removed() {
        let ts = RoiTimeSeries::new(DMatrix::from_element(840, 2, 3.7), 1.0).unwrap();
        for mode in [FilterMode::ZeroPhase, FilterMode::Causal] {
            let f = butterworth_bandpass(&ts, &BandpassSpec::default(), mode).unwrap();
            assert!(f.data().amax() < 1e-6, "{mode:?}");
        }
    }

    #[test]
    fn center_gain_matches_squared_response() {
        let f0 = (0.08f64 * 0.15).sqrt();
        let t = 2000;
        let ts = RoiTimeSeries::new(sinusoid(f0, t), 1.0).unwrap();
        let out = butterworth_bandpass(&ts, &BandpassSpec::default(), FilterMode::ZeroPhase).unwrap();
        let oracle = filter::tests_support::first_order_closed_form(0.08, 0.15, 1.0).response(f0, 1.0).norm_sqr();
        let amp = amplitude(out.data().as_slice(), f0, 300..t - 300);
        assert!((amp - oracle).abs() / oracle < 0.05, "amp {amp} oracle {oracle}");
    }

    #[test]
    fn stopband_attenuated() {
        let t = 2000;
        let spec = BandpassSpec::default();
        let f0 = (0.08f64 * 0.15).sqrt();
        let center = butterworth_bandpass(&RoiTimeSeries::new(sinusoid(f0, t), 1.0).unwrap(), &spec, FilterMode::ZeroPhase).unwrap();
        let high = butterworth_bandpass(&RoiTimeSeries::new(sinusoid(0.40, t), 1.0).unwrap(), &spec, FilterMode::ZeroPhase).unwrap();
        let a_c = amplitude(center.data().as_slice(), f0, 300..t - 300);
        let a_h = amplitude(high.data().as_slice(), 0.40, 300..t - 300);
        assert!(a_h < a_c, "{a_h} vs {a_c}");
    }

    #[test]
    fn nyquist_edge_rejected() {
        let ts = RoiTimeSeries::new(gaussian(100, 1, 12), 0.25).unwrap();
        assert!(butterworth_bandpass(&ts, &BandpassSpec::default(), FilterMode::ZeroPhase).is_err());
    }

    #[test]
    fn zero_phase_time_reversal() {
        let x = gaussian(840, 3, 13);
        let mut rev = x.clone();
        for i in 0..840 {
            rev.set_row(i, &x.row(839 - i));
        }
        let spec = BandpassSpec::default();
        let a = butterworth_bandpass(&RoiTimeSeries::new(x, 1.0).unwrap(), &spec, FilterMode::ZeroPhase).unwrap();
        let b = butterworth_bandpass(&RoiTimeSeries::new(rev, 1.0).unwrap(), &spec, FilterMode::ZeroPhase).unwrap();
        for i in 0..840 {
            for j in 0..3 {
                assert!((a.data()[(i, j)] - b.data()[(839 - i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn fcg_small_cases() {
        let s = gaussian(60, 1, 14);
        let mut two = DMatrix::zeros(60, 2);
        two.set_column(0, &s.column(0));
        two.set_column(1, &s.column(0));
        assert_eq!(pearson_fcg(&RoiTimeSeries::new(two, 1.0).unwrap()).unwrap(), vec![1.0]);

        let t = gaussian(60, 1, 15);
        let mut three = DMatrix::zeros(60, 3);
        three.set_column(0, &s.column(0));
        three.set_column(1, &(-s.column(0)));
        three.set_column(2, &t.column(0));
        let v = pearson_fcg(&RoiTimeSeries::new(three, 1.0).unwrap()).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-15);
        assert!((v[1] + v[2]).abs() < 1e-12);
    }

    #[test]
    fn fcg_matches_naive_oracle() {
        let x = gaussian(500, 10, 16);
        let v = pearson_fcg(&RoiTimeSeries::new(x.clone(), 1.0).unwrap()).unwrap();
        assert_eq!(v.len(), 45);
        let mut k = 0;
        for i in 0..10 {
            for j in i + 1..10 {
                let (a, b) = (x.column(i), x.column(j));
                let (ma, mb) = (a.mean(), b.mean());
                let mut sab = 0.0;
                let mut saa = 0.0;
                let mut sbb = 0.0;
                for r in 0..500 {
                    sab += (a[r] - ma) * (b[r] - mb);
                    saa += (a[r] - ma).powi(2);
                    sbb += (b[r] - mb).powi(2);
                }
                assert!((v[k] - sab / (saa * sbb).sqrt()).abs() < 1e-12);
                k += 1;
            }
        }
    }

    #[test]
    fn zero_variance_roi_reported() {
        let mut x = gaussian(30, 3, 17);
        x.set_column(1, &DVector::from_element(30, 2.0));
        match pearson_fcg(&RoiTimeSeries::new(x, 1.0).unwrap()) {
            Err(Error::ZeroVariance(msg)) => assert!(msg.contains('1')),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pipeline_bit_identical() {
        let ts = RoiTimeSeries::new(gaussian(300, 6, 18), 1.0).unwrap();
        let nm = NuisanceMatrix::new(gaussian(300, 2, 19), false).unwrap();
        let a = fcg_pipeline(&ts, &nm, &BandpassSpec::default(), FilterMode::ZeroPhase).unwrap();
        let b = fcg_pipeline(&ts, &nm, &BandpassSpec::default(), FilterMode::ZeroPhase).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn pca_recovers_planted_component() {
        let t = 100;
        let g = gaussian(t, 1, 20);
        let mut vox = gaussian(t, 40, 21) * 0.01;
        for j in 0..40 {
            let w = 1.0 + j as f64 / 10.0;
            let col = vox.column(j) + g.column(0) * w;
            vox.set_column(j, &col);
        }
        let pc = pca_regressors(&vox, 2).unwrap();
        let gc = g.column(0).add_scalar(-g.column(0).mean());
        let cos = pc.column(0).dot(&gc).abs() / gc.norm();
        assert!(cos > 0.999, "{cos}");
        assert!((pc.column(0).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        let ts = RoiTimeSeries::new(gaussian(10, 3, 22), 1.0).unwrap();
        ts.save_csv(&p).unwrap();
        assert_eq!(RoiTimeSeries::load_csv(&p, 1.0).unwrap(), ts);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn fcg_affine_invariant(seed in 0u64..1000, scales in proptest::collection::vec(0.01f64..100.0, 4), shift in -50.0f64..50.0) {
            let x = gaussian(80, 4, seed);
            let mut y = x.clone();
            for j in 0..4 {
                let col = x.column(j) * scales[j];
                y.set_column(j, &col.add_scalar(shift * (j as f64 - 1.5)));
            }
            let a = pearson_fcg(&RoiTimeSeries::new(x, 1.0).unwrap()).unwrap();
            let b = pearson_fcg(&RoiTimeSeries::new(y, 1.0).unwrap()).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
