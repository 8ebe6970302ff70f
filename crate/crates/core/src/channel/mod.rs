//! Frequency-selective channel tensors, array steering vectors and the
//! strongest-subcarrier surrogate used for beam alignment.

mod geometric;
pub mod io;

pub use geometric::{generate_paths, paths_to_tensor, ChannelModelConfig, Path, PathSet};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{fro2, CMat, CVec, ZERO};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("path delay {delay:e} s exceeds the OFDM symbol duration {limit:e} s")]
    DelayTooLarge { delay: f64, limit: f64 },
    #[error("subcarrier {0} is not available in this channel source")]
    UnavailableSubcarrier(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("channel file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shape of a channel tensor: `(n_sc, L, K, n_AP, n_UE)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub subcarriers: usize,
    pub aps: usize,
    pub ues: usize,
    pub ap_antennas: usize,
    pub ue_antennas: usize,
}

impl Dims {
    pub fn from_config(cfg: &crate::model::SystemConfig) -> Self {
        Dims {
            subcarriers: cfg.subcarriers,
            aps: cfg.aps,
            ues: cfg.ues,
            ap_antennas: cfg.ap_antennas,
            ue_antennas: cfg.ue_antennas,
        }
    }

    pub fn n_r(&self) -> usize {
        self.aps * self.ap_antennas
    }

    pub fn n_t(&self) -> usize {
        self.ues * self.ue_antennas
    }

    pub fn block_len(&self) -> usize {
        self.ap_antennas * self.ue_antennas
    }

    pub fn per_subcarrier(&self) -> usize {
        self.aps * self.ues * self.block_len()
    }

    pub fn len(&self) -> usize {
        self.subcarriers * self.per_subcarrier()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-subcarrier block channel `H^v_{ℓ,k}`, stored row-major over
/// `(v, ℓ, k, ap_antenna, ue_antenna)`. Subcarrier indices in the public
/// API are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    dims: Dims,
    data: Vec<Complex64>,
}

impl ChannelTensor {
    pub fn zeros(dims: Dims) -> Self {
        ChannelTensor {
            dims,
            data: vec![ZERO; dims.len()],
        }
    }

    pub fn from_raw(dims: Dims, data: Vec<Complex64>) -> Result<Self, ChannelError> {
        if data.len() != dims.len() {
            return Err(ChannelError::Dimension(format!(
                "payload has {} entries, dims require {}",
                data.len(),
                dims.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ChannelError::Format("non-finite channel entry".into()));
        }
        Ok(ChannelTensor { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, v: usize, l: usize, k: usize) -> usize {
        let d = &self.dims;
        ((v * d.aps + l) * d.ues + k) * d.block_len()
    }

    #[inline]
    pub fn get(&self, v: usize, l: usize, k: usize, a: usize, u: usize) -> Complex64 {
        self.data[self.offset(v, l, k) + a * self.dims.ue_antennas + u]
    }

    /// `H^v_{ℓ,k}` as an `n_AP × n_UE` matrix.
    pub fn block(&self, v: usize, l: usize, k: usize) -> CMat {
        let d = &self.dims;
        let off = self.offset(v, l, k);
        CMat::from_row_slice(d.ap_antennas, d.ue_antennas, &self.data[off..off + d.block_len()])
    }

    pub fn set_block(&mut self, v: usize, l: usize, k: usize, m: &CMat) {
        let d = self.dims;
        assert_eq!(m.shape(), (d.ap_antennas, d.ue_antennas));
        let off = self.offset(v, l, k);
        for a in 0..d.ap_antennas {
            for u in 0..d.ue_antennas {
                self.data[off + a * d.ue_antennas + u] = m[(a, u)];
            }
        }
    }

    pub fn block_fro2(&self, v: usize, l: usize, k: usize) -> f64 {
        let off = self.offset(v, l, k);
        self.data[off..off + self.dims.block_len()]
            .iter()
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Full `N_R × N_T` matrix of subcarrier `v`.
    pub fn full(&self, v: usize) -> CMat {
        let d = self.dims;
        CMat::from_fn(d.n_r(), d.n_t(), |r, c| {
            self.get(v, r / d.ap_antennas, c / d.ue_antennas, r % d.ap_antennas, c % d.ue_antennas)
        })
    }

    /// Column block `H_k^v` (`N_R × n_UE`).
    pub fn ue_matrix(&self, v: usize, k: usize) -> CMat {
        let d = self.dims;
        CMat::from_fn(d.n_r(), d.ue_antennas, |r, u| {
            self.get(v, r / d.ap_antennas, k, r % d.ap_antennas, u)
        })
    }

    /// Effective channel `G^v = H^v P` for per-UE beams (`N_R × K`).
    pub fn effective(&self, v: usize, beams: &[CVec]) -> CMat {
        let d = self.dims;
        assert_eq!(beams.len(), d.ues, "one beam per UE");
        let mut g = CMat::zeros(d.n_r(), d.ues);
        for (k, p) in beams.iter().enumerate() {
            assert_eq!(p.len(), d.ue_antennas, "beam length must equal n_UE");
            for l in 0..d.aps {
                let off = self.offset(v, l, k);
                for a in 0..d.ap_antennas {
                    let row = &self.data[off + a * d.ue_antennas..off + (a + 1) * d.ue_antennas];
                    g[(l * d.ap_antennas + a, k)] =
                        row.iter().zip(p.iter()).map(|(h, p)| h * p).sum();
                }
            }
        }
        g
    }

    /// Effective channels for every subcarrier.
    pub fn effective_all(&self, beams: &[CVec]) -> Vec<CMat> {
        (0..self.dims.subcarriers)
            .into_par_iter()
            .map(|v| self.effective(v, beams))
            .collect()
    }

    /// `Σ_v ‖H_k^v‖_F²` for each UE.
    pub fn ue_energies(&self) -> Vec<f64> {
        let d = self.dims;
        let mut e = vec![0.0; d.ues];
        for v in 0..d.subcarriers {
            for l in 0..d.aps {
                for (k, ek) in e.iter_mut().enumerate() {
                    *ek += self.block_fro2(v, l, k);
                }
            }
        }
        e
    }

    /// Multiplies every block of UE k by `scales[k]`.
    pub fn scale_ues(&mut self, scales: &[f64]) {
        let d = self.dims;
        assert_eq!(scales.len(), d.ues);
        let bl = d.block_len();
        for (i, chunk) in self.data.chunks_mut(bl).enumerate() {
            let k = i % d.ues;
            let s = scales[k];
            chunk.iter_mut().for_each(|z| *z *= s);
        }
    }

    /// Tensor seen by single-antenna UEs: the first antenna of each UE.
    pub fn first_antenna(&self) -> ChannelTensor {
        let d = self.dims;
        let nd = Dims { ue_antennas: 1, ..d };
        let data = self
            .data
            .chunks(d.ue_antennas)
            .map(|row| row[0])
            .collect();
        ChannelTensor { dims: nd, data }
    }
}

/// Something that can supply per-subcarrier channel blocks.
pub trait BlockSource {
    fn dims(&self) -> Dims;
    /// Whether subcarrier `v` (0-based) is available.
    fn has_subcarrier(&self, v: usize) -> bool;
    fn block_at(&self, v: usize, l: usize, k: usize) -> CMat;
    fn block_energy(&self, v: usize, l: usize, k: usize) -> f64 {
        fro2(&self.block_at(v, l, k))
    }
}

impl BlockSource for ChannelTensor {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn has_subcarrier(&self, v: usize) -> bool {
        v < self.dims.subcarriers
    }

    fn block_at(&self, v: usize, l: usize, k: usize) -> CMat {
        self.block(v, l, k)
    }

    fn block_energy(&self, v: usize, l: usize, k: usize) -> f64 {
        self.block_fro2(v, l, k)
    }
}

/// Frequency-flat beam-alignment input: for each (AP, UE) pair the
/// strongest sampled-subcarrier block.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateMatrix {
    pub matrix: CMat,
    /// Chosen 0-based subcarrier per (ℓ, k), row-major over ℓ.
    pub chosen: Vec<usize>,
    pub aps: usize,
    pub ues: usize,
    pub ap_antennas: usize,
    pub ue_antennas: usize,
}

impl SurrogateMatrix {
    /// Assembles a surrogate directly from an `N_R × N_T` matrix.
    pub fn from_matrix(
        matrix: CMat,
        aps: usize,
        ap_antennas: usize,
        ues: usize,
        ue_antennas: usize,
    ) -> Self {
        assert_eq!(matrix.shape(), (aps * ap_antennas, ues * ue_antennas));
        SurrogateMatrix {
            matrix,
            chosen: vec![0; aps * ues],
            aps,
            ues,
            ap_antennas,
            ue_antennas,
        }
    }

    pub fn n_r(&self) -> usize {
        self.aps * self.ap_antennas
    }

    /// `H̄_k` (`N_R × n_UE`).
    pub fn ue_block(&self, k: usize) -> CMat {
        self.matrix
            .columns(k * self.ue_antennas, self.ue_antennas)
            .into_owned()
    }

    pub fn block(&self, l: usize, k: usize) -> CMat {
        self.matrix
            .view(
                (l * self.ap_antennas, k * self.ue_antennas),
                (self.ap_antennas, self.ue_antennas),
            )
            .into_owned()
    }

    pub fn chosen_subcarrier(&self, l: usize, k: usize) -> usize {
        self.chosen[l * self.ues + k]
    }
}

/// Builds the surrogate from the given 0-based subcarriers: per (ℓ, k) the
/// block of maximal Frobenius norm, ties going to the lowest index.
pub fn extract_surrogate<S: BlockSource + ?Sized>(
    src: &S,
    sampled: &[usize],
) -> Result<SurrogateMatrix, ChannelError> {
    let d = src.dims();
    if sampled.is_empty() {
        return Err(ChannelError::Dimension("no sampled subcarriers".into()));
    }
    if let Some(&v) = sampled.iter().find(|&&v| !src.has_subcarrier(v)) {
        return Err(ChannelError::UnavailableSubcarrier(v));
    }
    let mut order: Vec<usize> = sampled.to_vec();
    order.sort_unstable();
    order.dedup();

    let mut matrix = CMat::zeros(d.n_r(), d.n_t());
    let mut chosen = vec![0; d.aps * d.ues];
    for l in 0..d.aps {
        for k in 0..d.ues {
            let mut best = order[0];
            let mut best_e = src.block_energy(best, l, k);
            for &v in &order[1..] {
                let e = src.block_energy(v, l, k);
                if e > best_e {
                    best = v;
                    best_e = e;
                }
            }
            chosen[l * d.ues + k] = best;
            let blk = src.block_at(best, l, k);
            matrix
                .view_mut(
                    (l * d.ap_antennas, k * d.ue_antennas),
                    (d.ap_antennas, d.ue_antennas),
                )
                .copy_from(&blk);
        }
    }
    Ok(SurrogateMatrix {
        matrix,
        chosen,
        aps: d.aps,
        ues: d.ues,
        ap_antennas: d.ap_antennas,
        ue_antennas: d.ue_antennas,
    })
}

/// Half-wavelength ULA response: entry m is `exp(−jπ·cos(angle)·m)/√n`.
pub fn steering_vector(angle: f64, n: usize) -> CVec {
    assert!(n >= 1, "steering vector needs at least one antenna");
    let scale = 1.0 / (n as f64).sqrt();
    let phase = -std::f64::consts::PI * angle.cos();
    CVec::from_fn(n, |m, _| Complex64::from_polar(scale, phase * m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, vec_norm2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_tensor(d: Dims, seed: u64) -> ChannelTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..d.len())
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ChannelTensor::from_raw(d, data).unwrap()
    }

    fn dims() -> Dims {
        Dims {
            subcarriers: 6,
            aps: 3,
            ues: 2,
            ap_antennas: 2,
            ue_antennas: 3,
        }
    }

    #[test]
    fn steering_broadside_is_flat() {
        let v = steering_vector(PI / 2.0, 5);
        for z in v.iter() {
            assert!((z - c(1.0 / 5f64.sqrt(), 0.0)).norm() < 1e-15);
        }
        let one = steering_vector(1.234, 1);
        assert!((one[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn steering_endfire_two_elements() {
        let v = steering_vector(0.0, 2);
        let s = 1.0 / 2f64.sqrt();
        assert!((v[0] - c(s, 0.0)).norm() < 1e-15);
        assert!((v[1] - Complex64::from_polar(s, -PI)).norm() < 1e-15);
    }

    #[test]
    fn steering_unit_norm_unit_modulus() {
        for n in 1..10 {
            for i in 0..20 {
                let v = steering_vector(i as f64 * 0.37, n);
                assert!((vec_norm2(&v) - 1.0).abs() < 1e-14);
                for z in v.iter() {
                    assert!((z.norm() * (n as f64).sqrt() - 1.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn full_matrix_matches_blocks() {
        let t = random_tensor(dims(), 1);
        let h = t.full(2);
        assert_eq!(h.shape(), (6, 6));
        let b = t.block(2, 1, 1);
        assert_eq!(h.view((2, 3), (2, 3)).into_owned(), b);
        let hk = t.ue_matrix(2, 1);
        assert_eq!(hk, h.columns(3, 3).into_owned());
    }

    #[test]
    fn effective_matches_full_product() {
        let t = random_tensor(dims(), 2);
        let beams = vec![
            CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.5, 0.5)]),
            CVec::from_vec(vec![c(0.0, -1.0), c(2.0, 0.0), c(0.1, 0.0)]),
        ];
        let mut p = CMat::zeros(6, 2);
        p.view_mut((0, 0), (3, 1)).copy_from(&beams[0]);
        p.view_mut((3, 1), (3, 1)).copy_from(&beams[1]);
        let want = t.full(4) * p;
        let got = t.effective(4, &beams);
        assert!(crate::linalg::rel_err(&got, &want) < 1e-14);
    }

    #[test]
    fn surrogate_picks_strongest() {
        let d = Dims {
            subcarriers: 3,
            aps: 1,
            ues: 1,
            ap_antennas: 1,
            ue_antennas: 1,
        };
        let t = ChannelTensor::from_raw(d, vec![c(1.0, 0.0), c(0.0, 3.0), c(2.0, 0.0)]).unwrap();
        let s = extract_surrogate(&t, &[0, 1, 2]).unwrap();
        assert_eq!(s.chosen, vec![1]);
        assert_eq!(s.matrix[(0, 0)], c(0.0, 3.0));
        // tie → lowest index
        let t = ChannelTensor::from_raw(d, vec![c(1.0, 0.0), c(0.0, 2.0), c(2.0, 0.0)]).unwrap();
        assert_eq!(extract_surrogate(&t, &[2, 1, 0]).unwrap().chosen, vec![1]);
    }

    #[test]
    fn surrogate_matches_brute_force_scan() {
        let t = random_tensor(dims(), 3);
        let sampled = [0, 2, 3, 5];
        let s = extract_surrogate(&t, &sampled).unwrap();
        for l in 0..3 {
            for k in 0..2 {
                let norms: Vec<f64> = sampled
                    .iter()
                    .map(|&v| {
                        let b = t.block(v, l, k);
                        b.iter().map(|z| z.norm_sqr()).sum()
                    })
                    .collect();
                let (i, _) = norms
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |acc, (i, &n)| if n > acc.1 { (i, n) } else { acc });
                assert_eq!(s.chosen_subcarrier(l, k), sampled[i]);
                assert_eq!(s.block(l, k), t.block(sampled[i], l, k));
            }
        }
    }

    #[test]
    fn surrogate_rejects_missing_subcarrier() {
        let t = random_tensor(dims(), 4);
        assert!(matches!(
            extract_surrogate(&t, &[0, 6]),
            Err(ChannelError::UnavailableSubcarrier(6))
        ));
    }

    #[test]
    fn first_antenna_and_scaling() {
        let mut t = random_tensor(dims(), 5);
        let one = t.first_antenna();
        assert_eq!(one.dims().ue_antennas, 1);
        assert_eq!(one.get(3, 2, 1, 1, 0), t.get(3, 2, 1, 1, 0));
        let before = t.clone();
        t.scale_ues(&[2.0, 0.5]);
        assert_eq!(t.get(1, 1, 0, 1, 2), before.get(1, 1, 0, 1, 2) * 2.0);
        assert_eq!(t.get(1, 1, 1, 1, 2), before.get(1, 1, 1, 1, 2) * 0.5);
    }
}
