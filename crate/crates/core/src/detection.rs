//! Centralized LMMSE equalization, post-equalization SINR and QPSK symbol
//! transmission.
//!
//! Symbol-energy convention: every transmitted symbol carries energy `Es`, so
//! both the desired term and the interference terms of the SINR are scaled
//! by `Es` while the noise term is `N0·‖w_k‖²`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{hpd_solve, vec_norm2, CMat, CVec};

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("Gram matrix is singular (N0 = 0 with a rank-deficient channel)")]
    SingularGram,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Per-subcarrier LMMSE filters `W^v` (`N_R × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerBank {
    pub filters: Vec<CMat>,
}

/// `W = G (G^H G + (N0/Es) I)^{-1}`, computed by a Hermitian solve against
/// the regularized Gram matrix.
pub fn lmmse(g: &CMat, n0: f64, es: f64) -> Result<CMat, DetectionError> {
    let k = g.ncols();
    let gh = g.adjoint();
    let mut gram = &gh * g;
    let reg = n0 / es;
    for i in 0..k {
        gram[(i, i)] += reg;
    }
    // (G^H G + ρI) X = G^H  ⇒  W = X^H
    let x = hpd_solve(gram, &gh).ok_or(DetectionError::SingularGram)?;
    Ok(x.adjoint())
}

pub fn lmmse_bank(channels: &[CMat], n0: f64, es: f64) -> Result<EqualizerBank, DetectionError> {
    let filters = channels
        .par_iter()
        .map(|g| lmmse(g, n0, es))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EqualizerBank { filters })
}

/// Post-equalization SINR of UE `k` with filter bank column `w_k`.
pub fn sinr(k: usize, g: &CMat, w: &CMat, n0: f64, es: f64) -> f64 {
    assert_eq!(g.shape(), w.shape(), "channel and filter shapes differ");
    let wk: CVec = w.column(k).into_owned();
    sinr_with_filter(k, g, &wk, n0, es)
}

/// SINR of column `k` of `g` for an arbitrary receive filter `wk`.
pub fn sinr_with_filter(k: usize, g: &CMat, wk: &CVec, n0: f64, es: f64) -> f64 {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for j in 0..g.ncols() {
        let z: Complex64 = wk.iter().zip(g.column(j).iter()).map(|(w, h)| w.conj() * h).sum();
        if j == k {
            signal = es * z.norm_sqr();
        } else {
            interference += es * z.norm_sqr();
        }
    }
    let denom = interference + n0 * vec_norm2(wk);
    if denom > 0.0 {
        signal / denom
    } else if signal > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

pub fn sinr_all(g: &CMat, w: &CMat, n0: f64, es: f64) -> Vec<f64> {
    (0..g.ncols()).map(|k| sinr(k, g, w, n0, es)).collect()
}

/// Gray-mapped QPSK with symbol energy `es`.
#[derive(Debug, Clone, Copy)]
pub struct Qpsk {
    amp: f64,
}

impl Qpsk {
    pub fn new(es: f64) -> Self {
        Qpsk {
            amp: (es / 2.0).sqrt(),
        }
    }

    pub fn symbol(&self, bits: u8) -> Complex64 {
        let re = if bits & 1 == 0 { self.amp } else { -self.amp };
        let im = if bits & 2 == 0 { self.amp } else { -self.amp };
        Complex64::new(re, im)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        self.symbol(rng.random_range(0..4u8))
    }

    /// Nearest constellation point.
    pub fn decide(&self, z: Complex64) -> Complex64 {
        Complex64::new(
            if z.re >= 0.0 { self.amp } else { -self.amp },
            if z.im >= 0.0 { self.amp } else { -self.amp },
        )
    }
}

/// Transmitted symbols: one `K × T_D` matrix per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub symbols: Vec<CMat>,
}

impl Payload {
    pub fn random<R: Rng + ?Sized>(
        ues: usize,
        subcarriers: usize,
        slots: usize,
        es: f64,
        rng: &mut R,
    ) -> Self {
        let q = Qpsk::new(es);
        let mut symbols = Vec::with_capacity(subcarriers);
        for _ in 0..subcarriers {
            let mut s = CMat::zeros(ues, slots);
            for t in 0..slots {
                for k in 0..ues {
                    s[(k, t)] = q.random(rng);
                }
            }
            symbols.push(s);
        }
        Payload { symbols }
    }

    pub fn slots(&self) -> usize {
        self.symbols.first().map_or(0, |s| s.ncols())
    }
}

/// Circularly-symmetric complex Gaussian matrix with variance `n0` per entry,
/// filled column by column.
pub fn complex_noise<R: Rng + ?Sized>(rows: usize, cols: usize, n0: f64, rng: &mut R) -> CMat {
    let sd = (n0 / 2.0).sqrt();
    let mut n = CMat::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            n[(r, c)] = Complex64::new(sd * re, sd * im);
        }
    }
    n
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detected {
    /// LMMSE soft estimates `W^H y`, `K × T_D` per subcarrier.
    pub soft: Vec<CMat>,
    /// Nearest-QPSK-point decisions.
    pub hard: Vec<CMat>,
}

/// Sends `payload` through the true effective channels `y = G s + n` and
/// equalizes with `bank`. Noise is drawn from `rng` subcarrier by subcarrier,
/// so the same RNG state yields the same noise for any equalizer.
pub fn transmit_detect<R: Rng + ?Sized>(
    channels: &[CMat],
    bank: &EqualizerBank,
    payload: &Payload,
    n0: f64,
    es: f64,
    rng: &mut R,
) -> Result<Detected, DetectionError> {
    if channels.len() != bank.filters.len() || channels.len() != payload.symbols.len() {
        return Err(DetectionError::Dimension(format!(
            "{} channels, {} filters, {} payload subcarriers",
            channels.len(),
            bank.filters.len(),
            payload.symbols.len()
        )));
    }
    let q = Qpsk::new(es);
    let noise: Vec<CMat> = channels
        .iter()
        .zip(&payload.symbols)
        .map(|(g, s)| complex_noise(g.nrows(), s.ncols(), n0, rng))
        .collect();
    let soft: Vec<CMat> = channels
        .par_iter()
        .zip(&bank.filters)
        .zip(&payload.symbols)
        .zip(&noise)
        .map(|(((g, w), s), n)| {
            let y = g * s + n;
            w.adjoint() * y
        })
        .collect();
    let hard = soft.iter().map(|s| s.map(|z| q.decide(z))).collect();
    Ok(Detected { soft, hard })
}
