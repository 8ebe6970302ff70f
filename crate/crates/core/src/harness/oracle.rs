//! Tiny-instance validation suite behind the `oracle` subcommand.
//!
//! Every check compares an implementation against an independent brute-force
//! or closed-form computation on small random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::beam_alignment::{analog_ia, analog_iu, build_codebook, exhaustive_maxmin, min_sinr};
use crate::channel::{extract_surrogate, SurrogateMatrix};
use crate::chest::{fbs_group_lasso, post_ba_chest, BlockLayout, FbsOptions};
use crate::detection::{lmmse, sinr};
use crate::linalg::{c, rel_err, CMat, CVec};
use crate::model::{apply_power_control, noise_power_per_subcarrier, Scenario, SystemConfig};

use super::{drop_channel, HarnessError};

/// Matrix with i.i.d. CN(0, 1) entries.
pub fn random_cmat<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(s * re, s * im)
    })
}

/// Reference SINR of UE `k` by explicit double loops over antennas and UEs.
pub fn scalar_sinr(k: usize, g: &CMat, w: &CMat, n0: f64, es: f64) -> f64 {
    let gain = |i: usize| {
        let mut acc = c(0.0, 0.0);
        for r in 0..g.nrows() {
            acc += w[(r, k)].conj() * g[(r, i)];
        }
        acc.norm_sqr()
    };
    let mut interference = 0.0;
    for i in 0..g.ncols() {
        if i != k {
            interference += gain(i);
        }
    }
    let mut wn = 0.0;
    for r in 0..w.nrows() {
        wn += w[(r, k)].norm_sqr();
    }
    es * gain(k) / (es * interference + n0 * wn)
}

/// `(GGᴴ + (N0/Es)I)⁻¹G`, the receive-side form of the LMMSE filter.
pub fn lmmse_alternate(g: &CMat, n0: f64, es: f64) -> CMat {
    let n = g.nrows();
    let a = g * g.adjoint() + CMat::identity(n, n) * c(n0 / es, 0.0);
    a.try_inverse().expect("regularized Gram is invertible") * g
}

/// Small scenario for greedy-versus-exhaustive comparisons:
/// `L = 2, K = 3, n_AP = 2, n_UE = 4, B = 4`.
pub fn tiny_scenario() -> Scenario {
    let system = SystemConfig {
        aps: 2,
        ues: 3,
        ap_antennas: 2,
        ue_antennas: 4,
        subcarriers: 16,
        codebook_size: 4,
        pilot_clusters: 1,
        carrier_freq_hz: 28e9,
        bandwidth_hz: 1e9,
        tx_power_max_dbm: 20.0,
        power_control_range_db: 3.0,
        power_control_target_dbm: None,
        noise_figure_db: 7.0,
        symbol_energy: 1.0,
        sampled_subcarriers: SystemConfig::uniform_sampling(16, 4),
        seed: 0,
    };
    let mut geometry = crate::model::GeometrySpec::default();
    geometry.area_x_m = 30.0;
    geometry.area_y_m = 30.0;
    Scenario {
        system,
        geometry,
        channel: Default::default(),
        chest: Default::default(),
    }
}

/// Power-controlled genie surrogate of drop `drop` of `scenario`, plus `N0`.
pub fn scenario_surrogate(
    scenario: &Scenario,
    seed: u64,
    drop: usize,
) -> Result<(SurrogateMatrix, f64), HarnessError> {
    let raw = drop_channel(scenario, seed, drop)?;
    let (tensor, _) = apply_power_control(&raw, &scenario.system)?;
    let all: Vec<usize> = (0..scenario.system.subcarriers).collect();
    let s = extract_surrogate(&tensor, &all)?;
    Ok((s, noise_power_per_subcarrier(&scenario.system)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> OracleCheck {
    OracleCheck {
        name,
        passed,
        detail,
    }
}

fn lmmse_identity(rng: &mut ChaCha8Rng) -> Result<OracleCheck, HarnessError> {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.random_range(1..=8);
        let n = rng.random_range(k..=16);
        let g = random_cmat(n, k, rng);
        let n0 = 10f64.powf(rng.random_range(-2.0..1.0));
        worst = worst.max(rel_err(&lmmse(&g, n0, 1.0)?, &lmmse_alternate(&g, n0, 1.0)));
    }
    Ok(check("lmmse_identity", worst <= 1e-9, format!("max rel err {worst:.3e}")))
}

fn sinr_expansion(rng: &mut ChaCha8Rng) -> Result<OracleCheck, HarnessError> {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let g = random_cmat(6, 3, rng);
        let w = lmmse(&g, 0.3, 1.0)?;
        for k in 0..3 {
            let a = sinr(k, &g, &w, 0.3, 1.0);
            let b = scalar_sinr(k, &g, &w, 0.3, 1.0);
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    Ok(check("sinr_expansion", worst <= 1e-10, format!("max rel err {worst:.3e}")))
}

fn greedy_vs_exhaustive(seed: u64) -> Result<OracleCheck, HarnessError> {
    let sc = tiny_scenario();
    let cb = build_codebook(sc.system.ue_antennas, sc.system.codebook_size);
    let mut violations = 0;
    let mut ia_wins = 0;
    let n = 20;
    for d in 0..n {
        let (s, n0) = scenario_surrogate(&sc, seed, d)?;
        let es = sc.system.symbol_energy;
        let ex = exhaustive_maxmin(&s, &cb, n0, es, 1 << 16)?;
        let ia = analog_ia(&s, &cb, n0, es)?;
        let ia_min = min_sinr(&s, ia.assignment.vectors(), n0, es);
        let iu_min = min_sinr(&s, analog_iu(&s, &cb).vectors(), n0, es);
        if ex.min_sinr < ia_min * (1.0 - 1e-12) {
            violations += 1;
        }
        if ia_min >= iu_min {
            ia_wins += 1;
        }
    }
    Ok(check(
        "exhaustive_dominates_greedy",
        violations == 0,
        format!("{violations} violations in {n} drops; analog IA ≥ analog IU in {ia_wins}"),
    ))
}

fn pass2_monotone(seed: u64) -> Result<OracleCheck, HarnessError> {
    let sc = tiny_scenario();
    let cb = build_codebook(sc.system.ue_antennas, sc.system.codebook_size);
    let mut bad = 0;
    let mut steps = 0;
    for d in 0..20 {
        let (s, n0) = scenario_surrogate(&sc, seed, d)?;
        let out = analog_ia(&s, &cb, n0, sc.system.symbol_energy)?;
        for st in &out.pass2 {
            steps += 1;
            if st.objective < st.incumbent_objective.unwrap_or(f64::NEG_INFINITY) {
                bad += 1;
            }
        }
    }
    Ok(check("pass2_never_worse", bad == 0, format!("{bad} of {steps} updates worse")))
}

fn fbs_least_squares(rng: &mut ChaCha8Rng) -> Result<OracleCheck, HarnessError> {
    let layout = BlockLayout {
        aps: 2,
        ues: 2,
        ap_antennas: 2,
        ue_antennas: 2,
    };
    let b = random_cmat(4, 8, rng);
    let y = random_cmat(4, 8, rng);
    let out = fbs_group_lasso(
        &y,
        &b,
        layout,
        0.0,
        FbsOptions {
            tol: 1e-12,
            max_iter: 100_000,
        },
    )?;
    let bh = b.adjoint();
    let ls = &y * &bh * (&b * &bh).try_inverse().expect("full row rank");
    let e = rel_err(&out.h, &ls);
    Ok(check("fbs_mu0_least_squares", e <= 1e-6, format!("rel err {e:.3e}")))
}

fn post_ba_noiseless(rng: &mut ChaCha8Rng) -> Result<OracleCheck, HarnessError> {
    let sc = tiny_scenario();
    let raw = drop_channel(&sc, rng.random(), 0)?;
    let cb = build_codebook(sc.system.ue_antennas, sc.system.codebook_size);
    let beams: Vec<CVec> = (0..sc.system.ues).map(|k| cb.beams[k % cb.len()].clone()).collect();
    let est = post_ba_chest(&raw, &beams, 0.0, 1.0, rng);
    let worst = est
        .iter()
        .enumerate()
        .map(|(v, g)| rel_err(g, &raw.effective(v, &beams)))
        .fold(0.0, f64::max);
    Ok(check("post_ba_noiseless", worst <= 1e-12, format!("max rel err {worst:.3e}")))
}

/// Runs the whole suite.
pub fn run_suite(seed: u64) -> Result<Vec<OracleCheck>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        lmmse_identity(&mut rng)?,
        sinr_expansion(&mut rng)?,
        greedy_vs_exhaustive(seed)?,
        pass2_monotone(seed)?,
        fbs_least_squares(&mut rng)?,
        post_ba_noiseless(&mut rng)?,
    ])
}
