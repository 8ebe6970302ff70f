//! Scenario configuration, geometry and derived physical quantities.
//!
//! All values in a scenario file are given in the units named by their keys
//! (`_hz`, `_dbm`, `_db`, `_m`, `_deg`). Everything inside the simulator is
//! linear: watts, metres, radians.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelModelConfig, ChannelTensor};
use crate::chest::ChestConfig;

/// Thermal noise density at 290 K.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("UE {0} has an identically zero channel")]
    ZeroChannel(usize),
}

/// System dimensions and radio parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of access points (L).
    pub aps: usize,
    /// Number of UEs (K).
    pub ues: usize,
    pub ap_antennas: usize,
    pub ue_antennas: usize,
    pub subcarriers: usize,
    /// Beam codebook size (B).
    pub codebook_size: usize,
    /// Number of pilot clusters (C) for pre-alignment channel estimation.
    pub pilot_clusters: usize,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_max_dbm: f64,
    /// Half-width of the power-control window; UEs transmit within
    /// `[max - 2·range, max]`.
    pub power_control_range_db: f64,
    /// Common received-energy target for power control, in dBm. When absent
    /// the weakest UE transmits at full power and the others back off.
    #[serde(default)]
    pub power_control_target_dbm: Option<f64>,
    pub noise_figure_db: f64,
    #[serde(default = "default_symbol_energy")]
    pub symbol_energy: f64,
    /// 1-based subcarrier indices used for pre-alignment channel estimation.
    pub sampled_subcarriers: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_symbol_energy() -> f64 {
    1.0
}

impl SystemConfig {
    /// Total receive antennas, `L·n_AP`.
    pub fn n_r(&self) -> usize {
        self.aps * self.ap_antennas
    }

    /// Total transmit antennas, `K·n_UE`.
    pub fn n_t(&self) -> usize {
        self.ues * self.ue_antennas
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.subcarriers as f64
    }

    /// Useful OFDM symbol duration, the inverse of the subcarrier spacing.
    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz()
    }

    pub fn tx_power_max_w(&self) -> f64 {
        dbm_to_watt(self.tx_power_max_dbm)
    }

    /// UEs per pilot cluster.
    pub fn cluster_size(&self) -> usize {
        self.ues / self.pilot_clusters
    }

    /// `n` uniformly spaced 1-based subcarrier indices covering the band,
    /// first and last included.
    pub fn uniform_sampling(n_sc: usize, n: usize) -> Vec<usize> {
        if n <= 1 || n_sc == 1 {
            return vec![1];
        }
        let n = n.min(n_sc);
        // ceil(i·(n_sc−1)/(n−1)), in integers
        (0..n)
            .map(|i| 1 + (i * (n_sc - 1)).div_ceil(n - 1))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        for (name, v) in [
            ("aps", self.aps),
            ("ues", self.ues),
            ("ap_antennas", self.ap_antennas),
            ("ue_antennas", self.ue_antennas),
            ("subcarriers", self.subcarriers),
            ("codebook_size", self.codebook_size),
            ("pilot_clusters", self.pilot_clusters),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.ues % self.pilot_clusters != 0 {
            return bad(format!(
                "pilot_clusters ({}) must divide ues ({})",
                self.pilot_clusters, self.ues
            ));
        }
        if !(self.bandwidth_hz > 0.0) || !(self.carrier_freq_hz > 0.0) {
            return bad("bandwidth_hz and carrier_freq_hz must be positive".into());
        }
        if !(self.symbol_energy > 0.0) {
            return bad("symbol_energy must be positive".into());
        }
        if !(self.power_control_range_db >= 0.0) {
            return bad("power_control_range_db must be non-negative".into());
        }
        if self.sampled_subcarriers.is_empty() {
            return bad("sampled_subcarriers must not be empty".into());
        }
        if let Some(&v) = self
            .sampled_subcarriers
            .iter()
            .find(|&&v| v == 0 || v > self.subcarriers)
        {
            return bad(format!(
                "sampled subcarrier {v} outside [1, {}]",
                self.subcarriers
            ));
        }
        let per_cluster = self.cluster_size() * self.ue_antennas;
        if self.codebook_size < per_cluster {
            warn!(
                "codebook_size {} < {} transmit antennas per pilot cluster; pre-alignment estimates will be underdetermined",
                self.codebook_size, per_cluster
            );
        }
        Ok(())
    }
}

/// Placement of every AP and UE for one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub ap_positions: Vec<[f64; 3]>,
    /// Array-axis azimuth of each AP, radians.
    pub ap_orientations: Vec<f64>,
    pub ue_positions: Vec<[f64; 3]>,
    /// Array-axis azimuth of each UE, radians.
    pub ue_orientations: Vec<f64>,
    pub ap_height: f64,
    pub ue_height: f64,
}

impl Geometry {
    pub fn validate(&self, cfg: &SystemConfig) -> Result<(), ModelError> {
        if self.ap_positions.len() != cfg.aps || self.ap_orientations.len() != cfg.aps {
            return Err(ModelError::InvalidConfig(format!(
                "geometry has {} APs, config expects {}",
                self.ap_positions.len(),
                cfg.aps
            )));
        }
        if self.ue_positions.len() != cfg.ues || self.ue_orientations.len() != cfg.ues {
            return Err(ModelError::InvalidConfig(format!(
                "geometry has {} UEs, config expects {}",
                self.ue_positions.len(),
                cfg.ues
            )));
        }
        if !(self.ap_height > 0.0 && self.ue_height > 0.0) {
            return Err(ModelError::InvalidConfig("heights must be positive".into()));
        }
        Ok(())
    }

    pub fn distance(&self, ap: usize, ue: usize) -> f64 {
        let a = self.ap_positions[ap];
        let u = self.ue_positions[ue];
        ((a[0] - u[0]).powi(2) + (a[1] - u[1]).powi(2) + (a[2] - u[2]).powi(2)).sqrt()
    }

    /// Azimuth of the direction from `from` to `to`.
    pub fn bearing(from: [f64; 3], to: [f64; 3]) -> f64 {
        (to[1] - from[1]).atan2(to[0] - from[0])
    }
}

/// Explicit AP placement entry in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApPlacement {
    pub x_m: f64,
    pub y_m: f64,
    pub orientation_deg: f64,
}

/// Procedural geometry: fixed APs, UEs dropped on a grid with random
/// orientation from {0°, 45°, 90°, 135°}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub area_x_m: f64,
    pub area_y_m: f64,
    pub grid_pitch_m: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    /// Explicit AP positions; when empty the APs are laid out on a regular
    /// grid over the area with broadside towards the area centre.
    #[serde(default)]
    pub ap: Vec<ApPlacement>,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec {
            area_x_m: 60.0,
            area_y_m: 60.0,
            grid_pitch_m: 2.0,
            ap_height_m: 12.0,
            ue_height_m: 1.65,
            ap: Vec::new(),
        }
    }
}

pub const UE_ORIENTATIONS_DEG: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

impl GeometrySpec {
    pub fn ap_layout(&self, n_aps: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
        if !self.ap.is_empty() {
            let pos = self
                .ap
                .iter()
                .map(|a| [a.x_m, a.y_m, self.ap_height_m])
                .collect();
            let ori = self.ap.iter().map(|a| a.orientation_deg.to_radians()).collect();
            return (pos, ori);
        }
        let cols = (n_aps as f64).sqrt().ceil() as usize;
        let rows = n_aps.div_ceil(cols);
        let centre = [self.area_x_m / 2.0, self.area_y_m / 2.0];
        let mut pos = Vec::with_capacity(n_aps);
        let mut ori = Vec::with_capacity(n_aps);
        for i in 0..n_aps {
            let (r, col) = (i / cols, i % cols);
            let x = self.area_x_m * (col as f64 + 0.5) / cols as f64;
            let y = self.area_y_m * (r as f64 + 0.5) / rows as f64;
            let p = [x, y, self.ap_height_m];
            let to_centre = if (x - centre[0]).abs() < 1e-9 && (y - centre[1]).abs() < 1e-9 {
                0.0
            } else {
                Geometry::bearing(p, [centre[0], centre[1], 0.0])
            };
            // Broadside (array axis perpendicular) towards the centre.
            ori.push(to_centre + PI / 2.0);
            pos.push(p);
        }
        (pos, ori)
    }

    /// Every UE grid location, row-major.
    pub fn ue_grid(&self) -> Vec<[f64; 2]> {
        let nx = (self.area_x_m / self.grid_pitch_m).floor() as usize;
        let ny = (self.area_y_m / self.grid_pitch_m).floor() as usize;
        let mut pts = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                pts.push([
                    (ix as f64 + 0.5) * self.grid_pitch_m,
                    (iy as f64 + 0.5) * self.grid_pitch_m,
                ]);
            }
        }
        pts
    }

    /// Drops `cfg.ues` UEs on distinct grid points.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        cfg: &SystemConfig,
        rng: &mut R,
    ) -> Result<Geometry, ModelError> {
        let grid = self.ue_grid();
        if grid.len() < cfg.ues {
            return Err(ModelError::InvalidConfig(format!(
                "UE grid has {} points, need {}",
                grid.len(),
                cfg.ues
            )));
        }
        let (ap_positions, ap_orientations) = self.ap_layout(cfg.aps);
        let picks = sample(rng, grid.len(), cfg.ues).into_vec();
        let ue_positions = picks
            .iter()
            .map(|&i| [grid[i][0], grid[i][1], self.ue_height_m])
            .collect();
        let ue_orientations = (0..cfg.ues)
            .map(|_| UE_ORIENTATIONS_DEG[rng.random_range(0..4)].to_radians())
            .collect();
        let geom = Geometry {
            ap_positions,
            ap_orientations,
            ue_positions,
            ue_orientations,
            ap_height: self.ap_height_m,
            ue_height: self.ue_height_m,
        };
        geom.validate(cfg)?;
        Ok(geom)
    }
}

/// A complete scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemConfig,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub channel: ChannelModelConfig,
    #[serde(default)]
    pub chest: ChestConfig,
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let sc = Self::from_toml_str(&text).map_err(|source| ModelError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.system.validate()?;
        if !self.geometry.ap.is_empty() && self.geometry.ap.len() != self.system.aps {
            return Err(ModelError::InvalidConfig(format!(
                "{} explicit AP placements for {} APs",
                self.geometry.ap.len(),
                self.system.aps
            )));
        }
        self.channel.validate().map_err(ModelError::InvalidConfig)?;
        self.chest.validate().map_err(ModelError::InvalidConfig)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Noise power per subcarrier in watts: thermal floor over one subcarrier
/// bandwidth plus the receiver noise figure.
pub fn noise_power_per_subcarrier(cfg: &SystemConfig) -> f64 {
    let dbm = THERMAL_NOISE_DBM_PER_HZ
        + 10.0 * (cfg.bandwidth_hz / cfg.subcarriers as f64).log10()
        + cfg.noise_figure_db;
    dbm_to_watt(dbm)
}

/// Wideband per-UE power-control decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerControl {
    /// Transmit power of each UE, watts.
    pub tx_power_w: Vec<f64>,
    /// Real amplitude factor applied to each UE's channel blocks.
    pub scales: Vec<f64>,
}

/// Picks per-UE transmit powers that equalize received channel energy.
///
/// `energies[k]` is UE k's mean per-subcarrier channel energy
/// `(1/n_sc)·Σ_v ‖H_k^v‖_F²` at unit transmit power. Each UE aims for
/// `p_k·energies[k] = target`, with `p_k` clipped to
/// `[P_max − 2·range, P_max]`. The target is the configured one, or the
/// weakest UE's energy at full power.
pub fn power_control(energies: &[f64], cfg: &SystemConfig) -> Result<PowerControl, ModelError> {
    if let Some(k) = energies.iter().position(|&e| !(e > 0.0)) {
        return Err(ModelError::ZeroChannel(k));
    }
    let p_max = cfg.tx_power_max_w();
    let p_min = p_max / db_to_lin(2.0 * cfg.power_control_range_db);
    let target = match cfg.power_control_target_dbm {
        Some(t) => dbm_to_watt(t),
        None => energies.iter().fold(f64::INFINITY, |m, &e| m.min(e)) * p_max,
    };
    let tx_power_w: Vec<f64> = energies
        .iter()
        .map(|&e| (target / e).clamp(p_min, p_max))
        .collect();
    // Per-subcarrier symbol energy: the transmit power is spread evenly over
    // the subcarriers.
    let n_sc = cfg.subcarriers as f64;
    let scales = tx_power_w.iter().map(|&p| (p / n_sc).sqrt()).collect();
    Ok(PowerControl { tx_power_w, scales })
}

/// Applies wideband power control to a unit-transmit-power channel tensor.
pub fn apply_power_control(
    tensor: &ChannelTensor,
    cfg: &SystemConfig,
) -> Result<(ChannelTensor, PowerControl), ModelError> {
    let n_sc = tensor.dims().subcarriers as f64;
    let energies: Vec<f64> = tensor
        .ue_energies()
        .into_iter()
        .map(|e| e / n_sc)
        .collect();
    let pc = power_control(&energies, cfg)?;
    let mut scaled = tensor.clone();
    scaled.scale_ues(&pc.scales);
    Ok((scaled, pc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_cfg() -> SystemConfig {
        SystemConfig {
            aps: 2,
            ues: 2,
            ap_antennas: 2,
            ue_antennas: 2,
            subcarriers: 8,
            codebook_size: 4,
            pilot_clusters: 1,
            carrier_freq_hz: 28e9,
            bandwidth_hz: 1e9,
            tx_power_max_dbm: 20.0,
            power_control_range_db: 3.0,
            power_control_target_dbm: None,
            noise_figure_db: 7.0,
            symbol_energy: 1.0,
            sampled_subcarriers: vec![1, 8],
            seed: 1,
        }
    }

    #[test]
    fn thermal_floor_one_hertz() {
        let mut cfg = small_cfg();
        cfg.noise_figure_db = 0.0;
        cfg.bandwidth_hz = 8.0;
        // 10^(-17.4) mW
        let want = 10f64.powf(-17.4) * 1e-3;
        assert!((noise_power_per_subcarrier(&cfg) / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_power_reference_values() {
        let mut cfg = small_cfg();
        cfg.subcarriers = 2048;
        // -174 + 10·log10(1e9/2048) + 7 dBm, evaluated offline.
        let n0 = noise_power_per_subcarrier(&cfg);
        assert!((n0 / 9.742491772308984e-15 - 1.0).abs() < 1e-12);
        cfg.subcarriers = 4096;
        assert!((noise_power_per_subcarrier(&cfg) / n0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noise_power_monotone() {
        let mut cfg = small_cfg();
        let mut last = 0.0;
        for nf in [0.0, 1.0, 3.5, 7.0, 12.0] {
            cfg.noise_figure_db = nf;
            let n0 = noise_power_per_subcarrier(&cfg);
            assert!(n0 > last);
            last = n0;
        }
        let mut last = f64::INFINITY;
        for nsc in [1, 2, 64, 1000, 2048] {
            cfg.subcarriers = nsc;
            let n0 = noise_power_per_subcarrier(&cfg);
            assert!(n0 < last);
            last = n0;
        }
    }

    fn rx_db(pc: &PowerControl, e: &[f64]) -> Vec<f64> {
        pc.tx_power_w
            .iter()
            .zip(e)
            .map(|(p, e)| lin_to_db(p * e))
            .collect()
    }

    #[test]
    fn power_control_equalizes_within_window() {
        let cfg = small_cfg();
        let e = [1e-9, 1e-9 * db_to_lin(2.0)];
        let pc = power_control(&e, &cfg).unwrap();
        let rx = rx_db(&pc, &e);
        assert!((rx[0] - rx[1]).abs() < 1e-9);
    }

    #[test]
    fn power_control_clips_large_imbalance() {
        let mut cfg = small_cfg();
        let e = [1e-9, 1e-9 * db_to_lin(20.0)];
        // Centre the target between the two so both UEs hit their limits.
        cfg.power_control_target_dbm = Some(watt_to_dbm(cfg.tx_power_max_w() / 2.0 * 1e-9 * 10.0));
        let pc = power_control(&e, &cfg).unwrap();
        let rx = rx_db(&pc, &e);
        assert!((rx[1] - rx[0] - 14.0).abs() < 1e-9);
        // Default target (weakest at full power) also leaves 14 dB.
        cfg.power_control_target_dbm = None;
        let pc = power_control(&e, &cfg).unwrap();
        let rx = rx_db(&pc, &e);
        assert!((rx[1] - rx[0] - 14.0).abs() < 1e-9);
        for &p in &pc.tx_power_w {
            let db = watt_to_dbm(p);
            assert!(db <= cfg.tx_power_max_dbm + 1e-9 && db >= cfg.tx_power_max_dbm - 6.0 - 1e-9);
        }
    }

    #[test]
    fn power_control_single_ue_uses_max_power() {
        let cfg = small_cfg();
        let pc = power_control(&[3e-7], &cfg).unwrap();
        assert!((pc.tx_power_w[0] / cfg.tx_power_max_w() - 1.0).abs() < 1e-12);
        let want = (cfg.tx_power_max_w() / cfg.subcarriers as f64).sqrt();
        assert!((pc.scales[0] / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_control_zero_channel() {
        let cfg = small_cfg();
        assert!(matches!(
            power_control(&[1.0, 0.0], &cfg),
            Err(ModelError::ZeroChannel(1))
        ));
    }

    #[test]
    fn validation_rejects_bad_clusters_and_indices() {
        let mut cfg = small_cfg();
        cfg.ues = 3;
        cfg.pilot_clusters = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.sampled_subcarriers = vec![0];
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.sampled_subcarriers = vec![9];
        assert!(cfg.validate().is_err());
        assert!(small_cfg().validate().is_ok());
    }

    #[test]
    fn uniform_sampling_matches_reference_grid() {
        assert_eq!(
            SystemConfig::uniform_sampling(2048, 10),
            vec![1, 229, 456, 684, 911, 1139, 1366, 1594, 1821, 2048]
        );
        assert_eq!(SystemConfig::uniform_sampling(64, 1), vec![1]);
    }

    #[test]
    fn geometry_generation_is_seeded() {
        let mut cfg = small_cfg();
        cfg.aps = 4;
        cfg.ues = 6;
        let spec = GeometrySpec::default();
        let g1 = spec.generate(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let g2 = spec.generate(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(g1.ap_positions.len(), 4);
        assert_eq!(g1.ue_positions.len(), 6);
        for &o in &g1.ue_orientations {
            assert!(UE_ORIENTATIONS_DEG
                .iter()
                .any(|d| (d.to_radians() - o).abs() < 1e-12));
        }
        let mut seen = g1.ue_positions.clone();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), 6);
    }
}
