//! Digital Butterworth bandpass design (bilinear transform with frequency
//! prewarping) and forward-backward application.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    pub f_low: f64,
    pub f_high: f64,
    /// Order per band edge; the transfer function has order `2 * order`.
    pub order: usize,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        BandpassSpec {
            f_low: 0.08,
            f_high: 0.15,
            order: 1,
        }
    }
}

impl BandpassSpec {
    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(fs > 0.0) {
            return Err(Error::InvalidParameter(format!("sampling frequency {fs} must be positive")));
        }
        if !(self.f_low > 0.0 && self.f_low < self.f_high && self.f_high < fs / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "band edges must satisfy 0 < {} < {} < Nyquist {}",
                self.f_low,
                self.f_high,
                fs / 2.0
            )));
        }
        if self.order == 0 || self.order > 8 {
            return Err(Error::InvalidParameter(format!("filter order {} outside 1..=8", self.order)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Forward then backward; squared magnitude response, no phase shift.
    #[default]
    ZeroPhase,
    /// One causal pass.
    Causal,
}

/// Transfer function `b(z⁻¹) / a(z⁻¹)` with `a[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iir {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, ck) in c.iter().enumerate() {
            next[k] += ck;
            next[k + 1] -= ck * r;
        }
        c = next;
    }
    c
}

/// Butterworth bandpass via analog prototype → lowpass-to-bandpass →
/// bilinear transform, all in zero-pole-gain form.
pub fn design_bandpass(spec: &BandpassSpec, fs: f64) -> Result<Iir> {
    spec.validate(fs)?;
    let n = spec.order;
    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / fs).tan();
    let (wl, wh) = (warp(spec.f_low), warp(spec.f_high));
    let bw = wh - wl;
    let w0sq = wl * wh;

    // Analog lowpass prototype poles on the unit circle, left half-plane.
    let proto: Vec<Complex64> = (0..n)
        .map(|k| {
            let m = -(n as f64) + 1.0 + 2.0 * k as f64;
            -Complex64::from_polar(1.0, std::f64::consts::PI * m / (2.0 * n as f64))
        })
        .collect();
    let mut poles = Vec::with_capacity(2 * n);
    for p in &proto {
        let half = p * bw / 2.0;
        let disc = (half * half - w0sq).sqrt();
        poles.push(half + disc);
        poles.push(half - disc);
    }
    // n analog zeros at s = 0 map to z = 1; n zeros at infinity map to z = -1.
    let fs2c = Complex64::new(fs2, 0.0);
    let dpoles: Vec<Complex64> = poles.iter().map(|p| (fs2c + p) / (fs2c - p)).collect();
    let mut dzeros = vec![Complex64::new(1.0, 0.0); n];
    dzeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), n));
    let denom: Complex64 = poles.iter().map(|p| fs2c - p).product();
    let gain = (Complex64::new(bw.powi(n as i32) * fs2.powi(n as i32), 0.0) / denom).re;

    let b: Vec<f64> = poly_from_roots(&dzeros).iter().map(|c| c.re * gain).collect();
    let a: Vec<f64> = poly_from_roots(&dpoles).iter().map(|c| c.re).collect();
    Ok(Iir { b, a })
}

impl Iir {
    pub fn order(&self) -> usize {
        self.a.len() - 1
    }

    /// Complex frequency response at `f` Hz.
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f / fs);
        let eval = |c: &[f64]| {
            c.iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * zinv + ck)
        };
        eval(&self.b) / eval(&self.a)
    }

    /// Direct form II transposed with initial state `zi`.
    pub fn lfilter(&self, x: &[f64], zi: Option<&[f64]>) -> Vec<f64> {
        let ord = self.order();
        let mut z = match zi {
            Some(s) => s.to_vec(),
            None => vec![0.0; ord],
        };
        let mut y = Vec::with_capacity(x.len());
        for &xn in x {
            let yn = self.b[0] * xn + if ord > 0 { z[0] } else { 0.0 };
            for k in 0..ord {
                let next = if k + 1 < ord { z[k + 1] } else { 0.0 };
                z[k] = self.b[k + 1] * xn + next - self.a[k + 1] * yn;
            }
            y.push(yn);
        }
        y
    }

    /// State that makes the response to a unit step start in steady state.
    pub fn steady_state(&self) -> Vec<f64> {
        let ord = self.order();
        if ord == 0 {
            return Vec::new();
        }
        // z = A z + B for the DF2T state recursion with constant unit input.
        let mut m = DMatrix::<f64>::identity(ord, ord);
        for i in 0..ord {
            m[(i, 0)] += self.a[i + 1];
            if i + 1 < ord {
                m[(i, i + 1)] -= 1.0;
            }
        }
        let rhs = DVector::from_fn(ord, |i, _| self.b[i + 1] - self.a[i + 1] * self.b[0]);
        m.lu().solve(&rhs).map(|v| v.as_slice().to_vec()).unwrap_or_else(|| vec![0.0; ord])
    }

    /// Samples until the impulse response envelope stays below `1e-12` of
    /// its peak.
    pub fn effective_length(&self) -> usize {
        let cap = 200_000;
        let mut impulse = vec![0.0; cap];
        impulse[0] = 1.0;
        let h = self.lfilter(&impulse, None);
        let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut tail = 0.0;
        let thresh = (1e-12 * peak).powi(2);
        for k in (0..cap).rev() {
            tail += h[k] * h[k];
            if tail > thresh {
                return k + 1;
            }
        }
        1
    }
}

/// Filter one series. Zero-phase mode mirror-pads by three effective
/// impulse lengths (capped at `len - 1`) and starts each pass in steady state.
pub fn apply(filter: &Iir, x: &[f64], mode: FilterMode, pad: usize) -> Vec<f64> {
    let zi = filter.steady_state();
    let scaled = |v: f64| zi.iter().map(|z| z * v).collect::<Vec<f64>>();
    match mode {
        FilterMode::Causal => {
            if x.is_empty() {
                return Vec::new();
            }
            filter.lfilter(x, Some(&scaled(x[0])))
        }
        FilterMode::ZeroPhase => {
            let t = x.len();
            let pad = pad.min(t.saturating_sub(1));
            let mut ext = Vec::with_capacity(t + 2 * pad);
            ext.extend((1..=pad).rev().map(|k| x[k]));
            ext.extend_from_slice(x);
            ext.extend((1..=pad).map(|k| x[t - 1 - k]));
            let fwd = filter.lfilter(&ext, Some(&scaled(ext[0])));
            let rev: Vec<f64> = fwd.into_iter().rev().collect();
            let bwd = filter.lfilter(&rev, Some(&scaled(rev[0])));
            let mut out: Vec<f64> = bwd.into_iter().rev().collect();
            out.drain(..pad);
            out.truncate(t);
            out
        }
    }
}
