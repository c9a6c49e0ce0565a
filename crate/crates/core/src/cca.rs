//! Plain and sparse CCA on standardized matrices.
//!
//! Inputs are column-standardized (sample sd). Internally each matrix is
//! divided by `sqrt(n - 1)` so that `||X u||₂ = 1` means unit sample variance
//! of the scores and `<X u, Y v>` is their sample correlation.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::thin_svd;
use crate::rng::{self, Purpose};
use crate::stats;

/// Singular values below this fraction of the largest are discarded.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SccaParams {
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SccaParams {
    fn default() -> Self {
        SccaParams {
            c1: 1.0,
            c2: 1.0,
            d1: 1.0,
            d2: 1.0,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

impl SccaParams {
    pub fn with_sparsity(c1: f64, c2: f64) -> Self {
        SccaParams {
            c1,
            c2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("d1", self.d1), ("d2", self.d2), ("tol", self.tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive and finite")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Power iterations on the cross-covariance from a fixed internal seed.
    #[default]
    Svd,
    SeededRandom(u64),
}

impl std::str::FromStr for Init {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svd" => Ok(Init::Svd),
            "seeded-random" | "random" => Ok(Init::SeededRandom(0)),
            other => Err(Error::InvalidParameter(format!("unknown init {other:?}; expected svd or seeded-random"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub objective: f64,
    pub support_u: Vec<usize>,
    pub support_v: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub params: Option<SccaParams>,
    /// Column manifests mapping u / v entries back to input columns.
    #[serde(default)]
    pub columns_x: Vec<usize>,
    #[serde(default)]
    pub columns_y: Vec<usize>,
}

impl AlignmentPair {
    fn build(u: DVector<f64>, v: DVector<f64>, objective: f64) -> AlignmentPair {
        let (u, v) = sign_convention(u, v);
        AlignmentPair {
            support_u: support(&u),
            support_v: support(&v),
            u: u.as_slice().to_vec(),
            v: v.as_slice().to_vec(),
            objective,
            iterations: 0,
            converged: true,
            objective_trace: vec![objective],
            params: None,
            columns_x: Vec::new(),
            columns_y: Vec::new(),
        }
    }

    /// Map supports through the column manifests (identity when empty).
    pub fn support_columns(&self) -> (Vec<usize>, Vec<usize>) {
        let map = |s: &[usize], m: &[usize]| s.iter().map(|&i| if m.is_empty() { i } else { m[i] }).collect();
        (map(&self.support_u, &self.columns_x), map(&self.support_v, &self.columns_y))
    }
}

fn support(w: &DVector<f64>) -> Vec<usize> {
    let cut = 1e-10 * w.amax();
    w.iter().enumerate().filter(|(_, x)| x.abs() > cut && **x != 0.0).map(|(i, _)| i).collect()
}

fn sign_convention(mut u: DVector<f64>, mut v: DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let mut lead = 0.0f64;
    for &x in u.iter() {
        if x.abs() > lead.abs() {
            lead = x;
        }
    }
    if lead < 0.0 {
        u.neg_mut();
        v.neg_mut();
    }
    (u, v)
}

/// A scaled data matrix with its thin SVD (`X̃ = U S Vᵀ`, V implicit).
#[derive(Debug, Clone)]
pub struct CcaData {
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    s: DVector<f64>,
}

impl CcaData {
    pub fn new(standardized: &DMatrix<f64>) -> Result<CcaData> {
        let n = standardized.nrows();
        if n < 3 || standardized.ncols() == 0 {
            return Err(Error::Dimension(format!("need n >= 3 rows and at least one column, got {n}x{}", standardized.ncols())));
        }
        let x = standardized / ((n - 1) as f64).sqrt();
        let svd = thin_svd(&x).truncated(RANK_TOL);
        let (u, s) = (svd.u, svd.s);
        Ok(CcaData { x, u, s })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `X̃ w`
    pub fn mul(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.x * w
    }

    /// `X̃ᵀ z`
    pub fn tmul(&self, z: &DVector<f64>) -> DVector<f64> {
        self.x.tr_mul(z)
    }

    /// Maximizer of `gᵀw` over the ellipsoid, when `g` lies in the row
    /// space (otherwise the supremum is unbounded).
    fn argmax_ellipsoid(&self, g: &DVector<f64>) -> Option<DVector<f64>> {
        // Vᵀg = S⁻¹ Uᵀ X̃ g
        let vg = self.u.tr_mul(&self.mul(g)).component_div(&self.s);
        if self.rank() < self.dim() {
            let resid = (g.norm_squared() - vg.norm_squared()).max(0.0).sqrt();
            if resid > 1e-6 * g.norm() {
                return None;
            }
        }
        let a = vg.component_div(&self.s);
        let an = a.norm();
        if an == 0.0 {
            return None;
        }
        // w = V S⁻² Vᵀg / ||S⁻¹Vᵀg||, and V c = X̃ᵀ U S⁻¹ c.
        let coef = a.component_div(&self.s).component_div(&self.s) / an;
        Some(self.tmul(&(&self.u * coef)))
    }

    /// Euclidean projection onto `{w : ||X̃ w||₂ <= 1}`.
    fn project_ellipsoid(&self, y: &DVector<f64>) -> DVector<f64> {
        let xy = self.mul(y);
        if xy.norm() <= 1.0 {
            return y.clone();
        }
        // Coordinates of y in the row space: c = Vᵀ y = S⁻¹ Uᵀ X̃ y.
        let c = self.u.tr_mul(&xy).component_div(&self.s);
        let s2 = self.s.component_mul(&self.s);
        let f = |mu: f64| -> f64 {
            s2.iter()
                .zip(c.iter())
                .map(|(s2, c)| s2 * c * c / (1.0 + mu * s2).powi(2))
                .sum()
        };
        let mut hi = 1.0;
        while f(hi) > 1.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = hi;
        // y - V diag(mu s² / (1 + mu s²)) c, with V w = X̃ᵀ U S⁻¹ w.
        let shrink = DVector::from_fn(c.len(), |k, _| c[k] * mu * s2[k] / (1.0 + mu * s2[k]) / self.s[k]);
        y - self.tmul(&(&self.u * shrink))
    }
}

fn l1(w: &DVector<f64>) -> f64 {
    w.iter().map(|x| x.abs()).sum()
}

fn soft(y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    y.map(|x| x.signum() * (x.abs() - lambda).max(0.0))
}

/// Projection onto the ℓ1 ball of radius `c` by the sort-based threshold.
fn project_l1(y: &DVector<f64>, c: f64) -> DVector<f64> {
    if l1(y) <= c {
        return y.clone();
    }
    let mut a: Vec<f64> = y.iter().map(|x| x.abs()).collect();
    a.sort_by(|p, q| q.total_cmp(p));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &ak) in a.iter().enumerate() {
        cum += ak;
        let t = (cum - c) / (k + 1) as f64;
        if ak > t {
            theta = t;
        } else {
            break;
        }
    }
    soft(y, theta)
}

/// Projection onto `{||w||₁ <= c} ∩ {||w||₂ <= d}`.
fn project_ball(y: &DVector<f64>, c: f64, d: f64) -> DVector<f64> {
    let n2 = y.norm();
    if n2 <= d && l1(y) <= c {
        return y.clone();
    }
    if n2 > d {
        let z = y * (d / n2);
        if l1(&z) <= c {
            return z;
        }
    }
    let z = project_l1(y, c);
    if z.norm() <= d {
        return z;
    }
    // Both constraints active: w ∝ soft(y, λ) with ||w||₁ / ||w||₂ = c / d.
    let target = c / d;
    let ratio = |lam: f64| {
        let w = soft(y, lam);
        let n = w.norm();
        if n == 0.0 {
            1.0
        } else {
            l1(&w) / n
        }
    };
    let (mut lo, mut hi) = (0.0, y.amax());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = soft(y, hi);
    let n = w.norm();
    if n == 0.0 {
        return z;
    }
    w * (d / n)
}

struct Constraint<'a> {
    data: &'a CcaData,
    c: f64,
    d: f64,
    /// Unscaled ADMM dual and penalty from the previous half-step.
    warm: std::cell::RefCell<Option<(DVector<f64>, f64)>>,
}

impl Constraint<'_> {
    /// Shrink toward the origin until every constraint holds.
    fn make_feasible(&self, w: DVector<f64>) -> DVector<f64> {
        let xn = self.data.mul(&w).norm();
        let mut f = 1.0f64;
        if xn > 1.0 {
            f = f.min(1.0 / xn);
        }
        let a = l1(&w);
        if a > self.c {
            f = f.min(self.c / a);
        }
        let b = w.norm();
        if b > self.d {
            f = f.min(self.d / b);
        }
        if f < 1.0 {
            w * f
        } else {
            w
        }
    }

    /// Maximize `gᵀw` over the constraint set. Closed forms are tried
    /// first (the maximizer over the ball or over the ellipsoid alone is
    /// optimal when it satisfies the other constraint); otherwise ADMM with
    /// residual balancing splits the ball and ellipsoid projections. The
    /// result never scores below the feasible start `w0`.
    fn maximize_linear(&self, g: &DVector<f64>, w0: DVector<f64>, tol: f64) -> DVector<f64> {
        let gn = g.norm();
        if gn == 0.0 {
            return w0;
        }
        let start = g.dot(&w0);
        let better = |cand: DVector<f64>| if g.dot(&cand) >= start { cand } else { w0.clone() };

        let ub = argmax_ball(g, self.c, self.d);
        if self.data.mul(&ub).norm() <= 1.0 + 1e-12 {
            return better(self.make_feasible(ub));
        }
        let mut size = ub.norm();
        if let Some(ue) = self.data.argmax_ellipsoid(g) {
            if l1(&ue) <= self.c * (1.0 + 1e-12) && ue.norm() <= self.d * (1.0 + 1e-12) {
                return better(self.make_feasible(ue));
            }
            size = size.min(ue.norm());
        }

        let (mut rho, mut w) = match self.warm.borrow_mut().take() {
            Some((lambda, rho)) => (rho, lambda / rho),
            None => (gn / size, DVector::zeros(g.len())),
        };
        let mut z = w0.clone();
        let mut u = z.clone();
        for k in 0..20_000 {
            u = project_ball(&(&z - &w + g / rho), self.c, self.d);
            let z_old = std::mem::replace(&mut z, self.data.project_ellipsoid(&(&u + &w)));
            w += &u - &z;
            let r = (&u - &z).norm();
            let s = rho * (&z - &z_old).norm();
            let scale = u.norm().max(z.norm()).max(1e-300);
            if r <= tol * scale && s <= tol * (rho * w.norm()).max(gn * 1e-3) {
                break;
            }
            if k % 10 == 9 {
                if r > 10.0 * s / rho {
                    rho *= 2.0;
                    w *= 0.5;
                } else if s / rho > 10.0 * r {
                    rho *= 0.5;
                    w *= 2.0;
                }
            }
        }
        *self.warm.borrow_mut() = Some((&w * rho, rho));
        better(self.make_feasible(u))
    }
}

/// Maximizer of `gᵀw` over `{||w||₁ <= c} ∩ {||w||₂ <= d}`.
fn argmax_ball(g: &DVector<f64>, c: f64, d: f64) -> DVector<f64> {
    let gn = g.norm();
    if l1(g) <= gn * c / d {
        return g * (d / gn);
    }
    let gmax = g.amax();
    let ties: Vec<usize> = (0..g.len()).filter(|&i| g[i].abs() == gmax).collect();
    let k = ties.len() as f64;
    if c / d <= k.sqrt() {
        // ℓ1 alone binds: spread c over the largest entries.
        let mut w = DVector::zeros(g.len());
        for &i in &ties {
            w[i] = g[i].signum() * c / k;
        }
        return w;
    }
    let target = c / d;
    let ratio = |lam: f64| {
        let w = soft(g, lam);
        l1(&w) / w.norm()
    };
    let (mut lo, mut hi) = (0.0, gmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = soft(g, hi);
    let n = w.norm();
    w * (d / n)
}

fn random_unit(rng: &mut impl rand::Rng, dim: usize) -> DVector<f64> {
    let w: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
    let n = w.norm();
    w / n
}

/// Seed for the power-iteration start; fixed so `Init::Svd` is reproducible.
const SVD_INIT_SEED: u64 = 0x5cca;

fn initial_pair(x: &CcaData, y: &CcaData, init: Init) -> (DVector<f64>, DVector<f64>) {
    match init {
        Init::Svd => {
            let mut r = rng::stream(SVD_INIT_SEED, Purpose::SolverInit, 0);
            let mut v = random_unit(&mut r, y.dim());
            let mut u = DVector::zeros(x.dim());
            for _ in 0..10 {
                u = x.tmul(&y.mul(&v));
                let un = u.norm();
                if un == 0.0 {
                    break;
                }
                u /= un;
                v = y.tmul(&x.mul(&u));
                let vn = v.norm();
                if vn == 0.0 {
                    break;
                }
                v /= vn;
            }
            (u, v)
        }
        Init::SeededRandom(seed) => {
            let mut r = rng::stream(seed, Purpose::SolverInit, 1);
            let u = random_unit(&mut r, x.dim());
            let v = random_unit(&mut r, y.dim());
            (u, v)
        }
    }
}

/// Sparse CCA by alternating maximization of `<X̃u, Ỹv>` subject to
/// `||X̃u|| <= 1, ||u||₁ <= c1, ||u||₂ <= d1` and the mirrored constraints on v.
pub fn fit_scca_data(x: &CcaData, y: &CcaData, params: &SccaParams, init: Init) -> Result<AlignmentPair> {
    params.validate()?;
    if x.n() != y.n() {
        return Err(Error::Dimension(format!("x has {} rows, y has {}", x.n(), y.n())));
    }
    let cu = Constraint {
        data: x,
        c: params.c1,
        d: params.d1,
        warm: Default::default(),
    };
    let cv = Constraint {
        data: y,
        c: params.c2,
        d: params.d2,
        warm: Default::default(),
    };
    let (u0, v0) = initial_pair(x, y, init);
    let mut u = cu.make_feasible(u0);
    let mut v = cv.make_feasible(v0);
    let inner_tol = (params.tol * 1e-1).max(1e-12);
    let mut obj = x.mul(&u).dot(&y.mul(&v));
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=params.max_iters {
        iterations = it;
        let gu = x.tmul(&y.mul(&v));
        let u1 = cu.maximize_linear(&gu, u.clone(), inner_tol);
        let gv = y.tmul(&x.mul(&u1));
        let v1 = cv.maximize_linear(&gv, v.clone(), inner_tol);
        let new = x.mul(&u1).dot(&y.mul(&v1));
        if new < obj {
            // Rounding-level regression: keep the previous iterate.
            converged = true;
            break;
        }
        let gain = new - obj;
        u = u1;
        v = v1;
        obj = new;
        trace.push(obj);
        if gain <= params.tol * obj.abs().max(1e-12) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("sparse CCA did not converge in {} iterations", params.max_iters);
    }
    let mut pair = AlignmentPair::build(u, v, obj);
    pair.iterations = iterations;
    pair.converged = converged;
    pair.objective_trace = trace;
    pair.params = Some(*params);
    Ok(pair)
}

pub fn fit_scca(x: &DMatrix<f64>, y: &DMatrix<f64>, params: &SccaParams, init: Init) -> Result<AlignmentPair> {
    check_rows(x, y)?;
    fit_scca_data(&CcaData::new(x)?, &CcaData::new(y)?, params, init)
}

/// Unconstrained leading canonical pair. Within-modality covariance is
/// pseudo-inverted through the truncated thin SVD.
pub fn fit_cca_data(x: &CcaData, y: &CcaData) -> Result<AlignmentPair> {
    if x.n() != y.n() {
        return Err(Error::Dimension(format!("x has {} rows, y has {}", x.n(), y.n())));
    }
    if x.rank() == 0 || y.rank() == 0 {
        return Err(Error::Degenerate("zero cross-covariance: a matrix has no nonzero singular value".into()));
    }
    let m = x.u.tr_mul(&y.u);
    if m.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("cross-covariance is exactly zero; direction undefined".into()));
    }
    let svd = thin_svd(&m);
    let a = svd.u.column(0).into_owned();
    let b = svd.v.column(0).into_owned();
    let whiten = |d: &CcaData, c: DVector<f64>| d.tmul(&(&d.u * c.component_div(&d.s.component_mul(&d.s))));
    let u = whiten(x, a);
    let v = whiten(y, b);
    let mut obj = x.mul(&u).dot(&y.mul(&v));
    let (u, v) = if obj < 0.0 {
        obj = -obj;
        (u, -v)
    } else {
        (u, v)
    };
    Ok(AlignmentPair::build(u, v, obj))
}

pub fn fit_cca(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<AlignmentPair> {
    check_rows(x, y)?;
    fit_cca_data(&CcaData::new(x)?, &CcaData::new(y)?)
}

fn check_rows(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!("x has {} rows, y has {}", x.nrows(), y.nrows())));
    }
    Ok(())
}

/// Scores `m · w`.
pub fn project(m: &DMatrix<f64>, w: &[f64]) -> Result<Vec<f64>> {
    if m.ncols() != w.len() {
        return Err(Error::Dimension(format!("matrix has {} columns, alignment vector has {}", m.ncols(), w.len())));
    }
    Ok((m * DVector::from_column_slice(w)).as_slice().to_vec())
}

/// Pearson correlation of two score vectors.
pub fn canonical_correlation(sx: &[f64], sy: &[f64]) -> Result<f64> {
    if sx.len() != sy.len() || sx.len() < 3 {
        return Err(Error::Dimension(format!("score vectors of length {} and {} (need equal, >= 3)", sx.len(), sy.len())));
    }
    stats::pearson(sx, sy).map_err(|_| Error::Degenerate("constant projection scores".into()))
}
