//! Synthetic paired datasets with known ground truth.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat), fed by
//! ChaCha8 streams keyed on the seed. Planted signals are scaled so that
//! every coordinate carrying signal has signal variance comparable to its
//! unit noise variance, so strength and `rho` set the signal-to-noise
//! ratio regardless of dimension.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distances::{d_x, d_y};
use crate::error::{Error, Result};
use crate::matrixio::{FeatureMatrix, PairedDataset};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthKind {
    Null,
    SharedLatent,
    SparseCanonicalPair,
}

/// Sparse unit vector: support indices (ascending) and their values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn to_dense(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        for (&i, &x) in self.indices.iter().zip(&self.values) {
            v[i] = x;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub kind: TruthKind,
    pub latent_correlation: f64,
    pub strength: Option<f64>,
    pub u_star: Option<SparseVector>,
    pub v_star: Option<SparseVector>,
    pub seed: u64,
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_direction(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// One scalar latent per subject shared by both modalities:
/// `x_i = strength·√p·g_i·a + e_i`, `y_i = strength·√q·g_i·b + f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedLatentModel {
    pub p: usize,
    pub q: usize,
    pub strength: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Multiplies the noise as well; `-1` for the mirrored model.
    noise_sign: f64,
}

impl SharedLatentModel {
    /// Directions drawn from `seed`.
    pub fn new(p: usize, q: usize, strength: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::InvalidParameter(format!("strength {strength} outside [0, 1]")));
        }
        if p == 0 || q < 2 {
            return Err(Error::InvalidParameter(format!("need p >= 1 and q >= 2, got p={p}, q={q}")));
        }
        let mut rng = stream(seed, Purpose::SynthStructure, 0);
        let a = unit_direction(p, &mut rng);
        let b = unit_direction(q, &mut rng);
        Ok(SharedLatentModel {
            p,
            q,
            strength,
            a,
            b,
            noise_sign: 1.0,
        })
    }

    /// Every sample reflected through the origin: directions `-a`, `-b`
    /// and negated noise. Distance matrices are unchanged.
    pub fn mirrored(&self) -> SharedLatentModel {
        SharedLatentModel {
            a: self.a.iter().map(|v| -v).collect(),
            b: self.b.iter().map(|v| -v).collect(),
            noise_sign: -self.noise_sign,
            ..self.clone()
        }
    }

    fn draw_subject(&self, rng: &mut impl Rng, x: &mut [f64], y: &mut [f64]) {
        let g = normal(rng);
        let sx = self.strength * (self.p as f64).sqrt() * g;
        let sy = self.strength * (self.q as f64).sqrt() * g;
        for (k, slot) in x.iter_mut().enumerate() {
            *slot = sx * self.a[k] + self.noise_sign * normal(rng);
        }
        for (k, slot) in y.iter_mut().enumerate() {
            *slot = sy * self.b[k] + self.noise_sign * normal(rng);
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<PairedDataset> {
        if n < 4 {
            return Err(Error::InvalidParameter(format!("need n >= 4, got {n}")));
        }
        let mut rng = stream(seed, Purpose::SynthSamples, 0);
        let mut xs = vec![0.0; n * self.p];
        let mut ys = vec![0.0; n * self.q];
        for i in 0..n {
            self.draw_subject(
                &mut rng,
                &mut xs[i * self.p..(i + 1) * self.p],
                &mut ys[i * self.q..(i + 1) * self.q],
            );
        }
        paired(DMatrix::from_row_slice(n, self.p, &xs), DMatrix::from_row_slice(n, self.q, &ys))
    }

    pub fn truth(&self, seed: u64) -> PlantedTruth {
        PlantedTruth {
            kind: if self.strength == 0.0 {
                TruthKind::Null
            } else {
                TruthKind::SharedLatent
            },
            latent_correlation: if self.strength == 0.0 { 0.0 } else { 1.0 },
            strength: Some(self.strength),
            u_star: None,
            v_star: None,
            seed,
        }
    }

    /// Monte Carlo estimate of the population distance-pair correlation from
    /// `pairs` independent subject pairs, with the scaled Euclidean distance
    /// on `x` and the Pearson distance on `y`.
    pub fn population_r(&self, pairs: usize, seed: u64) -> Result<f64> {
        let mut rng = stream(seed, Purpose::PopulationMc, 0);
        let (mut x1, mut x2) = (vec![0.0; self.p], vec![0.0; self.p]);
        let (mut y1, mut y2) = (vec![0.0; self.q], vec![0.0; self.q]);
        let mut dxs = Vec::with_capacity(pairs);
        let mut dys = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            self.draw_subject(&mut rng, &mut x1, &mut y1);
            self.draw_subject(&mut rng, &mut x2, &mut y2);
            dxs.push(d_x(&x1, &x2)?);
            dys.push(d_y(&y1, &y2)?);
        }
        crate::stats::pearson(&dxs, &dys)
    }
}

fn paired(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<PairedDataset> {
    let ids: Vec<String> = (0..x.nrows()).map(|i| format!("s{i:04}")).collect();
    Ok(PairedDataset {
        x: FeatureMatrix::new(x, ids.clone(), "X")?,
        y: FeatureMatrix::new(y, ids, "Y")?,
    })
}

/// Independent standard normal `X` and `Y`.
pub fn gen_null(n: usize, p: usize, q: usize, seed: u64) -> Result<PairedDataset> {
    SharedLatentModel::new(p, q, 0.0, seed)?.sample(n, seed)
}

pub fn gen_shared_latent(n: usize, p: usize, q: usize, strength: f64, seed: u64) -> Result<(PairedDataset, PlantedTruth)> {
    let model = SharedLatentModel::new(p, q, strength, seed)?;
    Ok((model.sample(n, seed)?, model.truth(seed)))
}

/// Sparse canonical pair: latents `(z_x, z_y)` with correlation `rho`,
/// `X = √s_u·z_x u*ᵀ + E (I − u* u*ᵀ)` and likewise for `Y`, where `u*`,
/// `v*` are unit vectors with `s_u`, `s_v` entries of equal magnitude and
/// random sign. Removing the noise component along `u*` makes the oracle
/// projection `X u*` equal to `√s_u·z_x`.
pub fn gen_sparse_canonical_pair(
    n: usize,
    p: usize,
    q: usize,
    s_u: usize,
    s_v: usize,
    rho: f64,
    seed: u64,
) -> Result<(PairedDataset, PlantedTruth)> {
    if s_u == 0 || s_v == 0 || s_u > p || s_v > q {
        return Err(Error::InvalidParameter(format!(
            "supports must satisfy 1 <= s_u <= p and 1 <= s_v <= q (got s_u={s_u}, p={p}, s_v={s_v}, q={q})"
        )));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho {rho} outside [0, 1)")));
    }
    if n < 4 {
        return Err(Error::InvalidParameter(format!("need n >= 4, got {n}")));
    }
    let mut srng = stream(seed, Purpose::SynthStructure, 1);
    let mut planted = |dim: usize, s: usize| {
        let mut idx = sample_indices(&mut srng, dim, s).into_vec();
        idx.sort_unstable();
        let mag = 1.0 / (s as f64).sqrt();
        let values = idx
            .iter()
            .map(|_| if srng.random::<bool>() { mag } else { -mag })
            .collect();
        SparseVector { dim, indices: idx, values }
    };
    let u_star = planted(p, s_u);
    let v_star = planted(q, s_v);

    let mut rng = stream(seed, Purpose::SynthSamples, 1);
    let resid = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DMatrix::zeros(n, q);
    let (ax, ay) = ((s_u as f64).sqrt(), (s_v as f64).sqrt());
    for i in 0..n {
        let zx = normal(&mut rng);
        let zy = rho * zx + resid * normal(&mut rng);
        fill_row(&mut x, i, &u_star, ax * zx, &mut rng);
        fill_row(&mut y, i, &v_star, ay * zy, &mut rng);
    }
    let truth = PlantedTruth {
        kind: TruthKind::SparseCanonicalPair,
        latent_correlation: rho,
        strength: None,
        u_star: Some(u_star),
        v_star: Some(v_star),
        seed,
    };
    Ok((paired(x, y)?, truth))
}

fn fill_row(m: &mut DMatrix<f64>, i: usize, dir: &SparseVector, signal: f64, rng: &mut impl Rng) {
    let d = m.ncols();
    let mut noise: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let along: f64 = dir.indices.iter().zip(&dir.values).map(|(&k, &v)| noise[k] * v).sum();
    for (&k, &v) in dir.indices.iter().zip(&dir.values) {
        noise[k] -= along * v;
    }
    for (&k, &v) in dir.indices.iter().zip(&dir.values) {
        noise[k] += signal * v;
    }
    for (j, val) in noise.into_iter().enumerate() {
        m[(i, j)] = val;
    }
}
