//! Clustered geometric channel model.
//!
//! Each (AP, UE) pair gets an optional line-of-sight path and a handful of
//! scattering clusters, each made of closely spaced rays. Gains follow
//! free-space path loss at the carrier, per-link log-normal shadowing and a
//! per-cluster excess attenuation. Delays are excess delays relative to the
//! pair's first arrival; the absolute propagation delay only enters through
//! the carrier phase of each gain.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{steering_vector, ChannelError, ChannelTensor, Dims};
use crate::linalg::{CVec, ZERO};
use crate::model::{Geometry, SystemConfig};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Statistical knobs of the synthetic channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModelConfig {
    /// LOS probability is `exp(−d_2D / los_decay_m)`.
    pub los_decay_m: f64,
    /// Every pair gets a LOS path.
    pub force_los: bool,
    /// Poisson mean of the NLOS cluster count per pair.
    pub mean_clusters: f64,
    pub max_clusters: usize,
    pub rays_per_cluster: usize,
    /// Std of a cluster's angle offset from the geometric bearing, each end.
    pub cluster_angle_spread_deg: f64,
    /// Std of ray angles around their cluster centre.
    pub ray_angle_spread_deg: f64,
    /// Cluster excess attenuation drawn uniformly from this dB range.
    pub cluster_attenuation_db: [f64; 2],
    pub shadowing_std_db: f64,
    /// Mean of the exponential cluster excess delay.
    pub cluster_delay_mean_ns: f64,
    /// Excess delays are capped at this fraction of the OFDM symbol.
    pub max_delay_fraction: f64,
}

impl Default for ChannelModelConfig {
    fn default() -> Self {
        ChannelModelConfig {
            los_decay_m: 40.0,
            force_los: false,
            mean_clusters: 3.0,
            max_clusters: 6,
            rays_per_cluster: 4,
            cluster_angle_spread_deg: 40.0,
            ray_angle_spread_deg: 3.0,
            cluster_attenuation_db: [3.0, 15.0],
            shadowing_std_db: 4.0,
            cluster_delay_mean_ns: 10.0,
            max_delay_fraction: 0.75,
        }
    }
}

impl ChannelModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.los_decay_m > 0.0) {
            return Err("channel.los_decay_m must be positive".into());
        }
        if !(self.mean_clusters >= 0.0) || self.rays_per_cluster == 0 {
            return Err("channel.mean_clusters must be ≥ 0 and rays_per_cluster ≥ 1".into());
        }
        let [lo, hi] = self.cluster_attenuation_db;
        if !(lo <= hi) {
            return Err("channel.cluster_attenuation_db must be [min, max]".into());
        }
        if !(self.shadowing_std_db >= 0.0)
            || !(self.cluster_delay_mean_ns >= 0.0)
            || !(self.max_delay_fraction > 0.0 && self.max_delay_fraction < 1.0)
        {
            return Err("channel: invalid shadowing, delay mean or delay fraction".into());
        }
        Ok(())
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Excess delay, seconds.
    pub delay: f64,
    /// Angle relative to the UE array axis, radians.
    pub aod: f64,
    /// Angle relative to the AP array axis, radians.
    pub aoa: f64,
}

/// Paths per (AP, UE) pair, row-major over the AP index.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub aps: usize,
    pub ues: usize,
    pub paths: Vec<Vec<Path>>,
}

impl PathSet {
    pub fn pair(&self, l: usize, k: usize) -> &[Path] {
        &self.paths[l * self.ues + k]
    }

    pub fn pair_mut(&mut self, l: usize, k: usize) -> &mut Vec<Path> {
        &mut self.paths[l * self.ues + k]
    }
}

/// Free-space amplitude gain `λ / (4π d)`.
pub fn free_space_amplitude(distance_m: f64, carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz / (4.0 * PI * distance_m)
}

fn wrap(angle: f64) -> f64 {
    (angle + PI).rem_euclid(2.0 * PI) - PI
}

/// Draws a path set for every (AP, UE) pair; deterministic given the RNG state.
pub fn generate_paths<R: Rng + ?Sized>(
    geom: &Geometry,
    cfg: &SystemConfig,
    model: &ChannelModelConfig,
    rng: &mut R,
) -> PathSet {
    let (l_n, k_n) = (geom.ap_positions.len(), geom.ue_positions.len());
    let fc = cfg.carrier_freq_hz;
    let max_delay = model.max_delay_fraction * cfg.symbol_duration_s();
    let cluster_spread = Normal::new(0.0, model.cluster_angle_spread_deg.to_radians()).unwrap();
    let ray_spread = Normal::new(0.0, model.ray_angle_spread_deg.to_radians()).unwrap();
    let shadowing = Normal::new(0.0, model.shadowing_std_db).unwrap();
    let delay_dist = (model.cluster_delay_mean_ns > 0.0)
        .then(|| Exp::new(1.0 / (model.cluster_delay_mean_ns * 1e-9)).unwrap());
    let cluster_count = (model.mean_clusters > 0.0).then(|| Poisson::new(model.mean_clusters).unwrap());

    let mut paths = Vec::with_capacity(l_n * k_n);
    for l in 0..l_n {
        for k in 0..k_n {
            let ap = geom.ap_positions[l];
            let ue = geom.ue_positions[k];
            let d = geom.distance(l, k);
            let d2 = ((ap[0] - ue[0]).powi(2) + (ap[1] - ue[1]).powi(2)).sqrt();
            let aod_los = wrap(Geometry::bearing(ue, ap) - geom.ue_orientations[k]);
            let aoa_los = wrap(Geometry::bearing(ap, ue) - geom.ap_orientations[l]);
            let shadow = 10f64.powf(shadowing.sample(rng) / 20.0);

            let los = model.force_los || rng.random::<f64>() < (-d2 / model.los_decay_m).exp();
            let mut n_clusters = cluster_count
                .map(|p| p.sample(rng) as usize)
                .unwrap_or(0)
                .min(model.max_clusters);
            if !los && n_clusters == 0 && model.mean_clusters > 0.0 {
                n_clusters = 1;
            }

            let mut pair = Vec::new();
            if los {
                let tau = d / SPEED_OF_LIGHT;
                pair.push(Path {
                    gain: Complex64::from_polar(
                        free_space_amplitude(d, fc) * shadow,
                        -2.0 * PI * fc * tau,
                    ),
                    delay: 0.0,
                    aod: aod_los,
                    aoa: aoa_los,
                });
            }
            for _ in 0..n_clusters {
                let excess = delay_dist
                    .map(|e| e.sample(rng))
                    .unwrap_or(0.0)
                    .min(max_delay);
                let path_len = d + excess * SPEED_OF_LIGHT;
                let [lo, hi] = model.cluster_attenuation_db;
                let att_db = if hi > lo { rng.random_range(lo..hi) } else { lo };
                let amp = free_space_amplitude(path_len, fc) * shadow * 10f64.powf(-att_db / 20.0)
                    / (model.rays_per_cluster as f64).sqrt();
                let aod_c = aod_los + cluster_spread.sample(rng);
                let aoa_c = aoa_los + cluster_spread.sample(rng);
                for _ in 0..model.rays_per_cluster {
                    let phase = rng.random_range(0.0..2.0 * PI);
                    pair.push(Path {
                        gain: Complex64::from_polar(amp, phase),
                        delay: excess,
                        aod: wrap(aod_c + ray_spread.sample(rng)),
                        aoa: wrap(aoa_c + ray_spread.sample(rng)),
                    });
                }
            }
            paths.push(pair);
        }
    }
    // Excess delays are relative to the first arrival of each pair.
    for pair in &mut paths {
        if let Some(first) = pair.iter().map(|p| p.delay).reduce(f64::min) {
            pair.iter_mut().for_each(|p| p.delay -= first);
        }
    }
    PathSet {
        aps: l_n,
        ues: k_n,
        paths,
    }
}

/// Baseband frequency of 0-based subcarrier `v`, centred on DC.
pub fn subcarrier_frequency(v: usize, cfg: &SystemConfig) -> f64 {
    (v as f64 - (cfg.subcarriers / 2) as f64) * cfg.subcarrier_spacing_hz()
}

/// Evaluates the multipath response on every subcarrier:
/// `H^v_{ℓ,k} = Σ g·exp(−j2π f_v τ)·√(n_AP n_UE)·a_AP(θ_A)·a_UE(θ_D)^H`.
pub fn paths_to_tensor(paths: &PathSet, cfg: &SystemConfig) -> Result<ChannelTensor, ChannelError> {
    let dims = Dims::from_config(cfg);
    if paths.aps != dims.aps || paths.ues != dims.ues {
        return Err(ChannelError::Dimension(format!(
            "path set is {}×{}, config is {}×{}",
            paths.aps, paths.ues, dims.aps, dims.ues
        )));
    }
    let limit = cfg.symbol_duration_s();
    for p in paths.paths.iter().flatten() {
        if p.delay >= limit || p.delay < 0.0 {
            return Err(ChannelError::DelayTooLarge {
                delay: p.delay,
                limit,
            });
        }
    }

    // Per-path outer products are frequency independent.
    let array_gain = ((dims.ap_antennas * dims.ue_antennas) as f64).sqrt();
    let outer: Vec<Vec<Vec<Complex64>>> = paths
        .paths
        .iter()
        .map(|pair| {
            pair.iter()
                .map(|p| {
                    let a: CVec = steering_vector(p.aoa, dims.ap_antennas);
                    let u: CVec = steering_vector(p.aod, dims.ue_antennas);
                    let mut m = Vec::with_capacity(dims.block_len());
                    for ai in 0..dims.ap_antennas {
                        for ui in 0..dims.ue_antennas {
                            m.push(a[ai] * u[ui].conj() * array_gain);
                        }
                    }
                    m
                })
                .collect()
        })
        .collect();

    let mut tensor = ChannelTensor::zeros(dims);
    let bl = dims.block_len();
    tensor
        .raw_mut()
        .par_chunks_mut(dims.per_subcarrier())
        .enumerate()
        .for_each(|(v, chunk)| {
            let f = subcarrier_frequency(v, cfg);
            for (pair_idx, pair) in paths.paths.iter().enumerate() {
                let (l, k) = (pair_idx / dims.ues, pair_idx % dims.ues);
                let off = (l * dims.ues + k) * bl;
                let block = &mut chunk[off..off + bl];
                block.iter_mut().for_each(|z| *z = ZERO);
                for (p, m) in pair.iter().zip(&outer[pair_idx]) {
                    let coef = p.gain * Complex64::from_polar(1.0, -2.0 * PI * f * p.delay);
                    for (z, o) in block.iter_mut().zip(m) {
                        *z += coef * o;
                    }
                }
            }
        });
    Ok(tensor)
}
