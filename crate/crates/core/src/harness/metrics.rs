//! Per-UE link metrics and their empirical distributions.

use std::collections::BTreeMap;

use crate::beam_alignment::Method;
use crate::linalg::CMat;

/// Root-mean-squared symbol error of each UE over all subcarriers and slots.
///
/// `detected[v]` and `transmitted[v]` are `K × T_D` per subcarrier.
pub fn rmsse(detected: &[CMat], transmitted: &[CMat]) -> Vec<f64> {
    assert_eq!(detected.len(), transmitted.len(), "subcarrier count differs");
    let k_n = transmitted.first().map_or(0, |s| s.nrows());
    let mut err = vec![0.0; k_n];
    let mut energy = vec![0.0; k_n];
    for (d, s) in detected.iter().zip(transmitted) {
        assert_eq!(d.shape(), s.shape(), "symbol block shapes differ");
        for k in 0..k_n {
            for t in 0..s.ncols() {
                err[k] += (d[(k, t)] - s[(k, t)]).norm_sqr();
                energy[k] += s[(k, t)].norm_sqr();
            }
        }
    }
    err.iter()
        .zip(&energy)
        .map(|(e, s)| if *s > 0.0 { (e / s).sqrt() } else { 0.0 })
        .collect()
}

/// `(1/n_sc)·Σ_v log2(1 + SINR_v)` for one UE.
pub fn spectral_efficiency(sinr_per_subcarrier: &[f64]) -> f64 {
    if sinr_per_subcarrier.is_empty() {
        return 0.0;
    }
    let sum: f64 = sinr_per_subcarrier
        .iter()
        .map(|&s| (1.0 + s.max(0.0)).log2())
        .sum();
    sum / sinr_per_subcarrier.len() as f64
}

/// Floor keeping zero SINRs finite in dB.
pub const SINR_DB_FLOOR: f64 = -300.0;

pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(SINR_DB_FLOOR)
    } else {
        SINR_DB_FLOOR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Rmsse,
    SinrDb,
    Se,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rmsse, Metric::SinrDb, Metric::Se];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rmsse => "rmsse",
            Metric::SinrDb => "sinr_db",
            Metric::Se => "se",
        }
    }
}

/// Collected samples of one method.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MethodMetrics {
    /// One per UE per drop.
    pub rmsse: Vec<f64>,
    /// One per UE per subcarrier per drop, dB.
    pub sinr_db: Vec<f64>,
    /// One per UE per drop, bit/s/Hz.
    pub se: Vec<f64>,
    /// Hard-decision symbol error rate, one per UE per drop.
    pub ser: Vec<f64>,
}

impl MethodMetrics {
    pub fn values(&self, m: Metric) -> &[f64] {
        match m {
            Metric::Rmsse => &self.rmsse,
            Metric::SinrDb => &self.sinr_db,
            Metric::Se => &self.se,
        }
    }

    pub fn extend(&mut self, other: MethodMetrics) {
        self.rmsse.extend(other.rmsse);
        self.sinr_db.extend(other.sinr_db);
        self.se.extend(other.se);
        self.ser.extend(other.ser);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub methods: BTreeMap<Method, MethodMetrics>,
    /// Median pilot SNR (dB) of each drop, strongest codebook beam per UE.
    pub pilot_snr_db: Vec<f64>,
    pub drops: usize,
}

impl MetricsReport {
    pub fn get(&self, m: Method) -> Option<&MethodMetrics> {
        self.methods.get(&m)
    }

    pub fn mean(&self, method: Method, metric: Metric) -> Option<f64> {
        self.get(method).map(|mm| mean(mm.values(metric)))
    }

    pub fn quantile(&self, method: Method, metric: Metric, q: f64) -> Option<f64> {
        self.get(method).map(|mm| quantile(mm.values(metric), q))
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Nearest-rank empirical quantile.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Sorted values paired with their empirical CDF `i/n`.
pub fn empirical_cdf(xs: &[f64]) -> Vec<(f64, f64)> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect()
}
