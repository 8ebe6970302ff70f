//! Two-stage channel estimation.
//!
//! Before beam alignment the UEs sweep the whole codebook cluster by cluster
//! and the CPU solves a block-sparse (group lasso) regression per sampled
//! subcarrier with forward-backward splitting. After alignment the UEs send
//! orthogonal Hadamard pilots through their fixed beams and the compound
//! channel `HP` is estimated by least squares on every subcarrier.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam_alignment::BeamCodebook;
use crate::channel::{BlockSource, ChannelTensor, Dims};
use crate::detection::complex_noise;
use crate::linalg::{c, fro, fro2, spectral_norm, CMat, CVec};

#[derive(Debug, Error)]
pub enum ChestError {
    #[error("{clusters} clusters do not divide {ues} UEs")]
    ClusterSizeMismatch { ues: usize, clusters: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Solver and regularization settings for pre-alignment estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChestConfig {
    /// `μ = mu_scale·√N0·√(n_AP·B)` unless `mu` is set.
    pub mu_scale: f64,
    /// Fixed regularization weight, overriding `mu_scale`.
    pub mu: Option<f64>,
    /// Relative iterate-change stopping threshold.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ChestConfig {
    fn default() -> Self {
        ChestConfig {
            mu_scale: 1.0,
            mu: None,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

impl ChestConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mu_scale >= 0.0) || self.mu.is_some_and(|m| !(m >= 0.0)) {
            return Err("chest: regularization must be non-negative".into());
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err("chest: tol must be positive and max_iter ≥ 1".into());
        }
        Ok(())
    }

    /// Regularization weight for noise power `n0`.
    pub fn mu_for(&self, n0: f64, ap_antennas: usize, codebook_size: usize) -> f64 {
        self.mu.unwrap_or_else(|| {
            self.mu_scale * n0.sqrt() * ((ap_antennas * codebook_size) as f64).sqrt()
        })
    }
}

/// Block geometry of an `N_R × N_T` channel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub aps: usize,
    pub ap_antennas: usize,
    pub ues: usize,
    pub ue_antennas: usize,
}

impl From<Dims> for BlockLayout {
    fn from(d: Dims) -> Self {
        BlockLayout {
            aps: d.aps,
            ap_antennas: d.ap_antennas,
            ues: d.ues,
            ue_antennas: d.ue_antennas,
        }
    }
}

impl BlockLayout {
    pub fn n_r(&self) -> usize {
        self.aps * self.ap_antennas
    }

    pub fn n_t(&self) -> usize {
        self.ues * self.ue_antennas
    }

    fn origin(&self, l: usize, k: usize) -> (usize, usize) {
        (l * self.ap_antennas, k * self.ue_antennas)
    }

    fn shape(&self) -> (usize, usize) {
        (self.ap_antennas, self.ue_antennas)
    }

    /// `Σ_{ℓ,k} ‖H_{ℓ,k}‖_F`.
    pub fn block_norm_sum(&self, h: &CMat) -> f64 {
        self.block_norms(h).iter().sum()
    }

    /// Block Frobenius norms, row-major over ℓ.
    pub fn block_norms(&self, h: &CMat) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.aps * self.ues);
        for l in 0..self.aps {
            for k in 0..self.ues {
                let v = h.view(self.origin(l, k), self.shape());
                out.push(v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
            }
        }
        out
    }
}

/// Pilot matrix for the codebook sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPilotMatrix {
    /// `N_T × (B·C)`.
    pub matrix: CMat,
    /// UEs of each cluster, ascending.
    pub clusters: Vec<Vec<usize>>,
    pub codebook_size: usize,
}

impl BeamPilotMatrix {
    pub fn n_pilot(&self) -> usize {
        self.matrix.ncols()
    }

    /// Cluster transmitting in pilot slot `t`.
    pub fn cluster_at(&self, slot: usize) -> usize {
        slot / self.codebook_size
    }

    pub fn cluster_of(&self, ue: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&ue))
    }
}

/// Randomly partitions the UEs into `clusters` equal groups; cluster `c`
/// sweeps all `B` beams in slots `c·B .. (c+1)·B` with unit pilot symbols.
/// The `j`-th member of a cluster starts its sweep at beam `j·B/size`, so
/// simultaneously transmitting UEs never share a beam while the cluster is
/// no larger than the codebook.
pub fn build_beam_pilots<R: Rng + ?Sized>(
    codebook: &BeamCodebook,
    ues: usize,
    clusters: usize,
    rng: &mut R,
) -> Result<BeamPilotMatrix, ChestError> {
    if clusters == 0 || ues % clusters != 0 {
        return Err(ChestError::ClusterSizeMismatch { ues, clusters });
    }
    let b_n = codebook.len();
    let n_ue = codebook.antennas();
    let mut perm: Vec<usize> = (0..ues).collect();
    perm.shuffle(rng);
    let size = ues / clusters;
    let groups: Vec<Vec<usize>> = perm
        .chunks(size)
        .map(|g| {
            let mut g = g.to_vec();
            g.sort_unstable();
            g
        })
        .collect();

    let mut matrix = CMat::zeros(ues * n_ue, b_n * clusters);
    for (ci, group) in groups.iter().enumerate() {
        for (j, &k) in group.iter().enumerate() {
            // members of a cluster sweep the codebook with staggered offsets
            let order: Vec<usize> = (0..b_n).map(|t| (t + j * b_n / size) % b_n).collect();
            for (t, &b) in order.iter().enumerate() {
                matrix
                    .view_mut((k * n_ue, ci * b_n + t), (n_ue, 1))
                    .copy_from(&codebook.beams[b]);
            }
        }
    }
    Ok(BeamPilotMatrix {
        matrix,
        clusters: groups,
        codebook_size: b_n,
    })
}

/// Proximal map of `t·‖·‖_F`: shrinks the block towards zero by `t`.
pub fn block_soft_threshold(m: &CMat, t: f64) -> CMat {
    let n = fro(m);
    if n <= t {
        CMat::zeros(m.nrows(), m.ncols())
    } else {
        m * c(1.0 - t / n, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbsOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl From<&ChestConfig> for FbsOptions {
    fn from(c: &ChestConfig) -> Self {
        FbsOptions {
            tol: c.tol,
            max_iter: c.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbsOutput {
    /// Best (lowest objective) iterate.
    pub h: CMat,
    pub iterations: usize,
    /// Objective at the zero start and after every iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub step: f64,
    pub mu: f64,
}

impl FbsOutput {
    pub fn objective(&self) -> f64 {
        self.objective_trace
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn group_lasso_objective(y: &CMat, b: &CMat, h: &CMat, mu: f64, layout: &BlockLayout) -> f64 {
    0.5 * fro2(&(y - h * b)) + mu * layout.block_norm_sum(h)
}

/// Objective increases up to this many ulps end the iteration as converged.
const STAGNATION_ULPS: f64 = 16.0;

/// Minimizes `½‖Y − HB‖_F² + μ Σ‖H_{ℓ,k}‖_F` by forward-backward splitting
/// with fixed step `0.99/σ_max(B)²`, starting from zero.
pub fn fbs_group_lasso(
    y: &CMat,
    b: &CMat,
    layout: BlockLayout,
    mu: f64,
    opts: FbsOptions,
) -> Result<FbsOutput, ChestError> {
    if y.nrows() != layout.n_r() || b.nrows() != layout.n_t() || y.ncols() != b.ncols() {
        return Err(ChestError::Dimension(format!(
            "Y is {}×{}, B is {}×{}, layout {}×{}",
            y.nrows(),
            y.ncols(),
            b.nrows(),
            b.ncols(),
            layout.n_r(),
            layout.n_t()
        )));
    }
    if !(mu >= 0.0) {
        return Err(ChestError::Dimension("negative regularization".into()));
    }
    let smax = spectral_norm(b);
    let mut h = CMat::zeros(layout.n_r(), layout.n_t());
    if smax == 0.0 {
        let obj = group_lasso_objective(y, b, &h, mu, &layout);
        return Ok(FbsOutput {
            h,
            iterations: 0,
            objective_trace: vec![obj],
            converged: true,
            step: 0.0,
            mu,
        });
    }
    let step = 0.99 / (smax * smax);
    let bh = b.adjoint();
    let ybh = y * &bh;
    let bbh = b * &bh;
    let thresh = step * mu;

    let mut trace = vec![group_lasso_objective(y, b, &h, mu, &layout)];
    let mut best = (trace[0], h.clone());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        // forward: H + τ(Y − HB)Bᴴ
        let mut z = &h + (&ybh - &h * &bbh) * c(step, 0.0);
        // backward: block-wise shrinkage
        for l in 0..layout.aps {
            for k in 0..layout.ues {
                let mut view = z.view_mut(layout.origin(l, k), layout.shape());
                let n = view.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                let s = if n <= thresh { 0.0 } else { 1.0 - thresh / n };
                view.iter_mut().for_each(|v| *v *= s);
            }
        }
        let change = fro(&(&z - &h));
        let scale = fro(&z);
        let obj = group_lasso_objective(y, b, &z, mu, &layout);
        let prev = *trace.last().unwrap();
        if obj > prev && obj - prev <= STAGNATION_ULPS * f64::EPSILON * prev {
            // rounding-level ascent: the iteration has stalled at machine precision
            converged = true;
            break;
        }
        h = z;
        trace.push(obj);
        if obj <= best.0 {
            best = (obj, h.clone());
        }
        if change <= opts.tol * scale || change == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(FbsOutput {
        h: best.1,
        iterations,
        objective_trace: trace,
        converged,
        step,
        mu,
    })
}

/// Pre-alignment estimates on the sampled subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub dims: Dims,
    /// 0-based subcarrier indices, in the order estimated.
    pub subcarriers: Vec<usize>,
    /// `N_R × N_T` estimate per sampled subcarrier.
    pub estimates: Vec<CMat>,
    /// Block Frobenius norms per sampled subcarrier, row-major over ℓ.
    pub block_norms: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub objectives: Vec<f64>,
    pub converged: Vec<bool>,
    pub objective_traces: Vec<Vec<f64>>,
}

impl ChannelEstimate {
    fn slot(&self, v: usize) -> Option<usize> {
        self.subcarriers.iter().position(|&s| s == v)
    }

    /// Diagnostics CSV: one row per (subcarrier, AP, UE) block.
    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from(
            "# cfba-chest-diagnostics v1\nsubcarrier,ap,ue,block_norm,iterations,objective,converged\n",
        );
        for (i, &v) in self.subcarriers.iter().enumerate() {
            for l in 0..self.dims.aps {
                for k in 0..self.dims.ues {
                    s.push_str(&format!(
                        "{},{},{},{:.9e},{},{:.9e},{}\n",
                        v + 1,
                        l + 1,
                        k + 1,
                        self.block_norms[i][l * self.dims.ues + k],
                        self.iterations[i],
                        self.objectives[i],
                        self.converged[i]
                    ));
                }
            }
        }
        s
    }

    /// Objective traces CSV: one row per (subcarrier, iteration).
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("# cfba-chest-trace v1\nsubcarrier,iteration,objective\n");
        for (i, &v) in self.subcarriers.iter().enumerate() {
            for (it, o) in self.objective_traces[i].iter().enumerate() {
                s.push_str(&format!("{},{},{:.12e}\n", v + 1, it, o));
            }
        }
        s
    }
}

impl BlockSource for ChannelEstimate {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn has_subcarrier(&self, v: usize) -> bool {
        self.slot(v).is_some()
    }

    fn block_at(&self, v: usize, l: usize, k: usize) -> CMat {
        let i = self.slot(v).expect("subcarrier was estimated");
        let d = self.dims;
        self.estimates[i]
            .view((l * d.ap_antennas, k * d.ue_antennas), (d.ap_antennas, d.ue_antennas))
            .into_owned()
    }

    fn block_energy(&self, v: usize, l: usize, k: usize) -> f64 {
        let i = self.slot(v).expect("subcarrier was estimated");
        let n = self.block_norms[i][l * self.dims.ues + k];
        n * n
    }
}

/// Simulates the beam-sweep observations `Y = H^v B + N` on each sampled
/// (0-based) subcarrier and solves the group lasso on each.
pub fn pre_ba_chest<R: Rng + ?Sized>(
    tensor: &ChannelTensor,
    pilots: &BeamPilotMatrix,
    sampled: &[usize],
    n0: f64,
    cfg: &ChestConfig,
    rng: &mut R,
) -> Result<ChannelEstimate, ChestError> {
    let d = tensor.dims();
    if pilots.matrix.nrows() != d.n_t() {
        return Err(ChestError::Dimension(format!(
            "pilot matrix has {} rows, channel has {} transmit antennas",
            pilots.matrix.nrows(),
            d.n_t()
        )));
    }
    if let Some(&v) = sampled.iter().find(|&&v| v >= d.subcarriers) {
        return Err(ChestError::Dimension(format!("subcarrier {v} out of range")));
    }
    let layout = BlockLayout::from(d);
    let mu = cfg.mu_for(n0, d.ap_antennas, pilots.codebook_size);
    let opts = FbsOptions::from(cfg);
    let observations: Vec<CMat> = sampled
        .iter()
        .map(|&v| tensor.full(v) * &pilots.matrix + complex_noise(d.n_r(), pilots.n_pilot(), n0, rng))
        .collect();
    let solved = observations
        .par_iter()
        .map(|y| fbs_group_lasso(y, &pilots.matrix, layout, mu, opts))
        .collect::<Result<Vec<_>, _>>()?;

    let mut est = ChannelEstimate {
        dims: d,
        subcarriers: sampled.to_vec(),
        estimates: Vec::with_capacity(sampled.len()),
        block_norms: Vec::with_capacity(sampled.len()),
        iterations: Vec::with_capacity(sampled.len()),
        objectives: Vec::with_capacity(sampled.len()),
        converged: Vec::with_capacity(sampled.len()),
        objective_traces: Vec::with_capacity(sampled.len()),
    };
    for (v, out) in sampled.iter().zip(solved) {
        if !out.converged {
            log::warn!(
                "group lasso on subcarrier {} stopped after {} iterations without converging",
                v + 1,
                out.iterations
            );
        }
        est.block_norms.push(layout.block_norms(&out.h));
        est.objectives.push(out.objective());
        est.iterations.push(out.iterations);
        est.converged.push(out.converged);
        est.objective_traces.push(out.objective_trace);
        est.estimates.push(out.h);
    }
    Ok(est)
}

/// Sylvester Hadamard matrix of order `n` (a power of two).
pub fn hadamard(n: usize) -> Vec<Vec<i8>> {
    assert!(n.is_power_of_two(), "Hadamard order must be a power of two");
    let mut h = vec![vec![1i8]];
    while h.len() < n {
        let m = h.len();
        let mut next = vec![vec![0i8; 2 * m]; 2 * m];
        for i in 0..m {
            for j in 0..m {
                next[i][j] = h[i][j];
                next[i][j + m] = h[i][j];
                next[i + m][j] = h[i][j];
                next[i + m][j + m] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

/// Post-alignment pilots: the first `ues` rows of the Hadamard matrix of
/// order `next_power_of_two(ues)`, scaled to symbol energy `es`.
pub fn hadamard_pilots(ues: usize, es: f64) -> CMat {
    let n_p = ues.next_power_of_two();
    let h = hadamard(n_p);
    let amp = es.sqrt();
    CMat::from_fn(ues, n_p, |k, t| c(amp * h[k][t] as f64, 0.0))
}

/// Least-squares estimate of the compound channel `H^v P` on every
/// subcarrier from orthogonal Hadamard pilots.
pub fn post_ba_chest<R: Rng + ?Sized>(
    tensor: &ChannelTensor,
    beams: &[CVec],
    n0: f64,
    es: f64,
    rng: &mut R,
) -> Vec<CMat> {
    let d = tensor.dims();
    let s = hadamard_pilots(d.ues, es);
    let n_p = s.ncols();
    let sh = s.adjoint() * c(1.0 / (n_p as f64 * es), 0.0);
    let noise: Vec<CMat> = (0..d.subcarriers)
        .map(|_| complex_noise(d.n_r(), n_p, n0, rng))
        .collect();
    noise
        .into_par_iter()
        .enumerate()
        .map(|(v, n)| {
            let y = tensor.effective(v, beams) * &s + n;
            y * &sh
        })
        .collect()
}

/// Identity pilot check helper: `S Sᴴ` for the unscaled Hadamard rows.
pub fn hadamard_gram(ues: usize) -> CMat {
    let s = hadamard_pilots(ues, 1.0);
    &s * s.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam_alignment::build_codebook;
    use crate::linalg::rel_err;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(r: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(r, cols, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
    }

    #[test]
    fn pilots_sequential_and_simultaneous() {
        let cb = build_codebook(2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = build_beam_pilots(&cb, 3, 3, &mut rng).unwrap();
        assert_eq!(seq.n_pilot(), 12);
        for (ci, g) in seq.clusters.iter().enumerate() {
            assert_eq!(g.len(), 1);
            let k = g[0];
            for t in 0..12 {
                let nz = seq.matrix.view((k * 2, t), (2, 1)).iter().any(|z| z.norm() > 0.0);
                assert_eq!(nz, seq.cluster_at(t) == ci);
            }
        }
        let sim = build_beam_pilots(&cb, 3, 1, &mut rng).unwrap();
        assert_eq!(sim.n_pilot(), 4);
        assert!(sim.matrix.iter().all(|z| z.norm() > 0.0));
        assert!(matches!(
            build_beam_pilots(&cb, 3, 2, &mut rng),
            Err(ChestError::ClusterSizeMismatch { .. })
        ));
    }

    #[test]
    fn pilots_structure_scan() {
        let cb = build_codebook(4, 8);
        let p = build_beam_pilots(&cb, 8, 4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(p.n_pilot(), 32);
        for k in 0..8 {
            let rows = p.matrix.rows(k * 4, 4);
            let nz: Vec<usize> = (0..32)
                .filter(|&t| rows.column(t).iter().any(|z| z.norm() > 0.0))
                .collect();
            assert_eq!(nz.len(), 8);
            let c0 = p.cluster_of(k).unwrap();
            let mut used = Vec::new();
            for (i, &t) in nz.iter().enumerate() {
                assert_eq!(t, c0 * 8 + i);
                let col = rows.column(t).into_owned();
                used.push(cb.beams.iter().position(|b| *b == col).expect("codebook beam"));
            }
            used.sort_unstable();
            assert_eq!(used, (0..8).collect::<Vec<_>>());
        }
        // cluster members never transmit the same beam in the same slot
        for group in &p.clusters {
            for t in 0..32 {
                let cols: Vec<CVec> = group
                    .iter()
                    .map(|&k| p.matrix.rows(k * 4, 4).column(t).into_owned())
                    .filter(|v| v.norm() > 0.0)
                    .collect();
                for i in 0..cols.len() {
                    for j in i + 1..cols.len() {
                        assert_ne!(cols[i], cols[j]);
                    }
                }
            }
        }
        for t in 0..32 {
            let n2: f64 = p.matrix.column(t).iter().map(|z| z.norm_sqr()).sum();
            assert!((n2 - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_threshold_cases() {
        let m = CMat::from_row_slice(1, 2, &[c(3.0, 0.0), c(0.0, 4.0)]);
        assert_eq!(block_soft_threshold(&m, 0.0), m);
        assert_eq!(block_soft_threshold(&m, 5.0), CMat::zeros(1, 2));
        let s = block_soft_threshold(&m, 1.0);
        assert!(rel_err(&s, &(&m * c(0.8, 0.0))) < 1e-15);
        // scalar complex soft-thresholding: z·max(0, 1 − t/|z|)
        let z = c(-1.2, 0.5);
        let t = 0.4;
        let want = z * (1.0 - t / z.norm());
        let got = block_soft_threshold(&CMat::from_element(1, 1, z), t)[(0, 0)];
        assert!((got - want).norm() < 1e-15);
    }

    #[test]
    fn soft_threshold_shrinks_preserving_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..50 {
            let m = randn(3, 2, &mut rng);
            let t = i as f64 * 0.1;
            let s = block_soft_threshold(&m, t);
            assert!(fro(&s) <= fro(&m));
            if fro(&s) > 0.0 {
                let ratio = s[(0, 0)] / m[(0, 0)];
                assert!(ratio.im.abs() < 1e-14 && ratio.re > 0.0);
            }
        }
    }

    fn tiny_layout() -> BlockLayout {
        BlockLayout { aps: 2, ap_antennas: 2, ues: 2, ue_antennas: 2 }
    }

    #[test]
    fn fbs_zero_mu_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = randn(4, 10, &mut rng);
        let y = randn(4, 10, &mut rng);
        let out = fbs_group_lasso(&y, &b, tiny_layout(), 0.0, FbsOptions { tol: 1e-13, max_iter: 100_000 }).unwrap();
        let bbh = &b * b.adjoint();
        let ls = &y * b.adjoint() * bbh.try_inverse().unwrap();
        assert!(out.converged);
        assert!(rel_err(&out.h, &ls) < 1e-6);
    }

    #[test]
    fn fbs_large_mu_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = randn(4, 6, &mut rng);
        let y = randn(4, 6, &mut rng);
        let l = tiny_layout();
        let mu = l.block_norms(&(&y * b.adjoint())).into_iter().fold(0.0, f64::max);
        let out = fbs_group_lasso(&y, &b, l, mu * 1.0001, FbsOptions { tol: 1e-10, max_iter: 1000 }).unwrap();
        assert_eq!(out.h, CMat::zeros(4, 4));
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn fbs_objective_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = randn(4, 5, &mut rng);
        let y = randn(4, 5, &mut rng);
        let out = fbs_group_lasso(&y, &b, tiny_layout(), 0.7, FbsOptions { tol: 1e-12, max_iter: 5000 }).unwrap();
        for (i, w) in out.objective_trace.windows(2).enumerate() {
            assert!(w[1] <= w[0], "iteration {i}: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fbs_shape_errors() {
        let b = CMat::zeros(4, 5);
        let y = CMat::zeros(3, 5);
        assert!(fbs_group_lasso(&y, &b, tiny_layout(), 0.1, FbsOptions { tol: 1e-6, max_iter: 10 }).is_err());
    }

    #[test]
    fn hadamard_rows_orthogonal() {
        for n in [1, 2, 4, 8, 16] {
            let h = hadamard(n);
            for i in 0..n {
                for j in 0..n {
                    let ip: i32 = (0..n).map(|t| h[i][t] as i32 * h[j][t] as i32).sum();
                    assert_eq!(ip, if i == j { n as i32 } else { 0 });
                }
            }
        }
        let g = hadamard_gram(8);
        assert_eq!(g, CMat::identity(8, 8) * c(8.0, 0.0));
        assert_eq!(hadamard_pilots(5, 1.0).ncols(), 8);
    }

    #[test]
    fn block_source_reads_estimates() {
        let d = Dims { subcarriers: 4, aps: 2, ues: 1, ap_antennas: 1, ue_antennas: 2 };
        let est = ChannelEstimate {
            dims: d,
            subcarriers: vec![3],
            estimates: vec![CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 3.0), c(0.0, 0.0)])],
            block_norms: vec![vec![5f64.sqrt(), 3.0]],
            iterations: vec![1],
            objectives: vec![0.0],
            converged: vec![true],
            objective_traces: vec![vec![0.0]],
        };
        assert!(est.has_subcarrier(3) && !est.has_subcarrier(0));
        assert_eq!(est.block_at(3, 1, 0)[(0, 0)], c(0.0, 3.0));
        assert!((est.block_energy(3, 0, 0) - 5.0).abs() < 1e-12);
        assert!(est.diagnostics_csv().lines().count() == 4);
    }
}
