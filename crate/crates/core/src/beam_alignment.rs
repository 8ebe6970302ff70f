//! UE beam codebook and beam-alignment strategies.
//!
//! All strategies work on the frequency-flat [`SurrogateMatrix`]. Every
//! argmax breaks ties towards the lowest codebook (or UE) index.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{steering_vector, SurrogateMatrix};
use crate::detection::{lmmse, sinr_all, sinr_with_filter};
use crate::linalg::{c, hpd_solve_vec, leading_right_singular, vec_norm2, CMat, CVec, ONE, ZERO};

#[derive(Debug, Error, PartialEq)]
pub enum BaError {
    #[error("UE {0} has a zero surrogate channel")]
    DegenerateChannel(usize),
    #[error("exhaustive search needs {needed} evaluations, budget is {budget}")]
    CombinatorialBudgetExceeded { needed: String, budget: u64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed beam assignment record: {0}")]
    Parse(String),
}

/// Phase-ramp beams on the uniform grid `φ_b = bπ/B`, `b = 0..B−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCodebook {
    pub beams: Vec<CVec>,
    pub angles: Vec<f64>,
}

impl BeamCodebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn antennas(&self) -> usize {
        self.beams.first().map_or(0, |b| b.len())
    }
}

pub fn build_codebook(ue_antennas: usize, size: usize) -> BeamCodebook {
    assert!(size >= 1 && ue_antennas >= 1, "codebook needs B ≥ 1 and n_UE ≥ 1");
    let angles: Vec<f64> = (0..size)
        .map(|b| b as f64 * std::f64::consts::PI / size as f64)
        .collect();
    let beams = angles
        .iter()
        .map(|&phi| steering_vector(phi, ue_antennas))
        .collect();
    BeamCodebook { beams, angles }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    SingleAntenna,
    DigitalIu,
    AnalogIu,
    AnalogIa,
    Exhaustive,
}

impl Method {
    pub const COMPARED: [Method; 4] = [
        Method::SingleAntenna,
        Method::DigitalIu,
        Method::AnalogIu,
        Method::AnalogIa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SingleAntenna => "single_antenna",
            Method::DigitalIu => "digital_iu",
            Method::AnalogIu => "analog_iu",
            Method::AnalogIa => "analog_ia",
            Method::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = BaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single_antenna" => Ok(Method::SingleAntenna),
            "digital_iu" => Ok(Method::DigitalIu),
            "analog_iu" => Ok(Method::AnalogIu),
            "analog_ia" => Ok(Method::AnalogIa),
            "exhaustive" => Ok(Method::Exhaustive),
            other => Err(BaError::Parse(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Beam {
    /// 0-based codebook index.
    Index(usize),
    /// Explicit unit-norm vector (digital beamforming, single antenna).
    Vector(CVec),
}

/// One beam per UE.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamAssignment {
    pub method: Method,
    pub beams: Vec<Beam>,
    vectors: Vec<CVec>,
}

impl BeamAssignment {
    pub fn from_indices(method: Method, indices: &[usize], codebook: &BeamCodebook) -> Self {
        BeamAssignment {
            method,
            beams: indices.iter().map(|&b| Beam::Index(b)).collect(),
            vectors: indices.iter().map(|&b| codebook.beams[b].clone()).collect(),
        }
    }

    /// Vectors are normalized to unit norm.
    pub fn from_vectors(method: Method, vectors: Vec<CVec>) -> Self {
        let vectors: Vec<CVec> = vectors
            .into_iter()
            .map(|v| {
                let n = vec_norm2(&v).sqrt();
                if n > 0.0 {
                    v / c(n, 0.0)
                } else {
                    v
                }
            })
            .collect();
        BeamAssignment {
            method,
            beams: vectors.iter().cloned().map(Beam::Vector).collect(),
            vectors,
        }
    }

    pub fn vectors(&self) -> &[CVec] {
        &self.vectors
    }

    pub fn ues(&self) -> usize {
        self.vectors.len()
    }

    pub fn indices(&self) -> Option<Vec<usize>> {
        self.beams
            .iter()
            .map(|b| match b {
                Beam::Index(i) => Some(*i),
                Beam::Vector(_) => None,
            })
            .collect()
    }

    /// Block-diagonal `P = diag(p_1, …, p_K)` (`N_T × K`).
    pub fn materialize(&self) -> CMat {
        let n = self.vectors.first().map_or(0, |v| v.len());
        let k = self.vectors.len();
        let mut p = CMat::zeros(n * k, k);
        for (i, v) in self.vectors.iter().enumerate() {
            p.view_mut((i * n, i), (n, 1)).copy_from(v);
        }
        p
    }

    /// Text record sent to the UEs over the control channel.
    ///
    /// ```text
    /// # beam-assignment v1
    /// method analog_ia
    /// ues 2
    /// ue 1 index 5
    /// ue 2 vector 0.5,0 0.5,0 0.5,0 0.5,0
    /// ```
    ///
    /// UE numbers and codebook indices are 1-based in the record.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# beam-assignment v1").unwrap();
        writeln!(s, "method {}", self.method).unwrap();
        writeln!(s, "ues {}", self.beams.len()).unwrap();
        for (k, b) in self.beams.iter().enumerate() {
            match b {
                Beam::Index(i) => writeln!(s, "ue {} index {}", k + 1, i + 1).unwrap(),
                Beam::Vector(v) => {
                    let entries: Vec<String> =
                        v.iter().map(|z| format!("{:?},{:?}", z.re, z.im)).collect();
                    writeln!(s, "ue {} vector {}", k + 1, entries.join(" ")).unwrap();
                }
            }
        }
        s
    }

    /// Parses [`to_record`](Self::to_record) output. Index entries need the
    /// codebook to resolve their vectors.
    pub fn from_record(text: &str, codebook: Option<&BeamCodebook>) -> Result<Self, BaError> {
        let perr = |m: String| BaError::Parse(m);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let head = lines.next().ok_or_else(|| perr("empty record".into()))?;
        if head != "# beam-assignment v1" {
            return Err(perr(format!("unexpected header {head:?}")));
        }
        let method = lines
            .next()
            .and_then(|l| l.strip_prefix("method "))
            .ok_or_else(|| perr("missing method line".into()))?
            .parse::<Method>()?;
        let ues: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("ues "))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| perr("missing ues line".into()))?;
        let mut beams = Vec::with_capacity(ues);
        let mut vectors = Vec::with_capacity(ues);
        for (k, line) in lines.enumerate() {
            let mut parts = line.split_whitespace();
            if parts.next() != Some("ue") {
                return Err(perr(format!("bad line {line:?}")));
            }
            let num: usize = parts
                .next()
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| perr(format!("bad UE number in {line:?}")))?;
            if num != k + 1 {
                return Err(perr(format!("UE {num} out of order")));
            }
            match parts.next() {
                Some("index") => {
                    let b: usize = parts
                        .next()
                        .and_then(|n| n.parse().ok())
                        .filter(|&b| b >= 1)
                        .ok_or_else(|| perr(format!("bad index in {line:?}")))?;
                    let cb = codebook.ok_or_else(|| perr("index entry needs a codebook".into()))?;
                    let v = cb
                        .beams
                        .get(b - 1)
                        .ok_or_else(|| perr(format!("index {b} beyond codebook size {}", cb.len())))?;
                    beams.push(Beam::Index(b - 1));
                    vectors.push(v.clone());
                }
                Some("vector") => {
                    let entries = parts
                        .map(|e| {
                            let (re, im) = e
                                .split_once(',')
                                .ok_or_else(|| perr(format!("bad entry {e:?}")))?;
                            let re: f64 = re.parse().map_err(|_| perr(format!("bad entry {e:?}")))?;
                            let im: f64 = im.parse().map_err(|_| perr(format!("bad entry {e:?}")))?;
                            Ok(c(re, im))
                        })
                        .collect::<Result<Vec<_>, BaError>>()?;
                    let v = CVec::from_vec(entries);
                    beams.push(Beam::Vector(v.clone()));
                    vectors.push(v);
                }
                _ => return Err(perr(format!("bad beam kind in {line:?}"))),
            }
        }
        if beams.len() != ues {
            return Err(perr(format!("expected {ues} UEs, found {}", beams.len())));
        }
        Ok(BeamAssignment {
            method,
            beams,
            vectors,
        })
    }
}

/// Eigenbeamforming: leading right-singular vector of each `H̄_k`.
pub fn digital_iu(surrogate: &SurrogateMatrix) -> Result<BeamAssignment, BaError> {
    let vectors = (0..surrogate.ues)
        .into_par_iter()
        .map(|k| {
            let (sigma, v) = leading_right_singular(&surrogate.ue_block(k));
            if sigma > 0.0 {
                Ok(v)
            } else {
                Err(BaError::DegenerateChannel(k))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BeamAssignment::from_vectors(Method::DigitalIu, vectors))
}

/// Lowest-index argmax.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-UE codebook search maximizing `‖H̄_k p_b‖²`.
pub fn analog_iu(surrogate: &SurrogateMatrix, codebook: &BeamCodebook) -> BeamAssignment {
    let idx: Vec<usize> = (0..surrogate.ues)
        .into_par_iter()
        .map(|k| analog_iu_single(&surrogate.ue_block(k), codebook))
        .collect();
    BeamAssignment::from_indices(Method::AnalogIu, &idx, codebook)
}

fn analog_iu_single(hk: &CMat, codebook: &BeamCodebook) -> usize {
    let gains: Vec<f64> = codebook.beams.iter().map(|p| vec_norm2(&(hk * p))).collect();
    argmax(&gains)
}

/// Effective column `H̄_k p` of every (UE, beam) combination, cached.
struct EffectiveColumns {
    cols: Vec<Vec<CVec>>,
}

impl EffectiveColumns {
    fn new(surrogate: &SurrogateMatrix, codebook: &BeamCodebook) -> Self {
        let cols = (0..surrogate.ues)
            .map(|k| {
                let hk = surrogate.ue_block(k);
                codebook.beams.iter().map(|p| &hk * p).collect()
            })
            .collect();
        EffectiveColumns { cols }
    }
}

/// SINR of the last column of `g` under the LMMSE filter for `g`.
fn last_column_sinr(g: &CMat, n0: f64, es: f64) -> f64 {
    let m = g.ncols();
    let gh = g.adjoint();
    let mut gram = &gh * g;
    for i in 0..m {
        gram[(i, i)] += n0 / es;
    }
    let mut e = CVec::zeros(m);
    e[m - 1] = ONE;
    // w_k = G (GᴴG + ρI)⁻¹ e_k
    let x = match hpd_solve_vec(gram, &e) {
        Some(x) => x,
        None => return 0.0,
    };
    let w = g * x;
    sinr_with_filter(m - 1, g, &w, n0, es)
}

fn stack_columns(cols: &[&CVec]) -> CMat {
    let n = cols[0].len();
    let mut g = CMat::from_element(n, cols.len(), ZERO);
    for (j, col) in cols.iter().enumerate() {
        g.set_column(j, col);
    }
    g
}

/// Post-equalization SINR of UE `k` transmitting `candidate`, against the
/// UEs in `fixed` (UE index, beam) only. The LMMSE filter is restricted to
/// `fixed ∪ {k}`.
pub fn sinr_partial(
    k: usize,
    candidate: &CVec,
    fixed: &[(usize, CVec)],
    surrogate: &SurrogateMatrix,
    n0: f64,
    es: f64,
) -> Result<f64, BaError> {
    let check = |p: &CVec| {
        if p.len() != surrogate.ue_antennas {
            Err(BaError::Dimension(format!(
                "beam of length {} for {} UE antennas",
                p.len(),
                surrogate.ue_antennas
            )))
        } else {
            Ok(())
        }
    };
    check(candidate)?;
    if k >= surrogate.ues {
        return Err(BaError::Dimension(format!("UE {k} out of range")));
    }
    let mut cols = Vec::with_capacity(fixed.len() + 1);
    for (i, p) in fixed {
        check(p)?;
        if *i >= surrogate.ues || *i == k {
            return Err(BaError::Dimension(format!("invalid fixed UE {i}")));
        }
        cols.push(surrogate.ue_block(*i) * p);
    }
    cols.push(surrogate.ue_block(k) * candidate);
    let refs: Vec<&CVec> = cols.iter().collect();
    Ok(last_column_sinr(&stack_columns(&refs), n0, es))
}

/// One greedy decision of the interference-aware search.
#[derive(Debug, Clone, PartialEq)]
pub struct IaStep {
    pub ue: usize,
    /// Beam held before this step (pass 2 only).
    pub incumbent: Option<usize>,
    pub incumbent_objective: Option<f64>,
    pub chosen: usize,
    pub objective: f64,
    /// Objective of every codebook beam, in codebook order.
    pub candidates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IaOutcome {
    pub assignment: BeamAssignment,
    /// UEs sorted by descending `σ_max(H̄_k)`.
    pub order: Vec<usize>,
    pub pass1: Vec<IaStep>,
    pub pass2: Vec<IaStep>,
}

/// Interference-aware greedy beam alignment.
///
/// Pass 1 visits UEs by descending largest singular value and picks each
/// beam against the already placed UEs only. Pass 2 walks the same order
/// backwards, re-picking each beam against all other current beams.
pub fn analog_ia(
    surrogate: &SurrogateMatrix,
    codebook: &BeamCodebook,
    n0: f64,
    es: f64,
) -> Result<IaOutcome, BaError> {
    let k_n = surrogate.ues;
    let sigmas: Vec<f64> = (0..k_n)
        .map(|k| leading_right_singular(&surrogate.ue_block(k)).0)
        .collect();
    if let Some(k) = sigmas.iter().position(|&s| !(s > 0.0)) {
        return Err(BaError::DegenerateChannel(k));
    }
    let mut order: Vec<usize> = (0..k_n).collect();
    // stable: equal σ keep ascending UE index
    order.sort_by(|&a, &b| sigmas[b].partial_cmp(&sigmas[a]).unwrap());

    let eff = EffectiveColumns::new(surrogate, codebook);
    let mut chosen: Vec<Option<usize>> = vec![None; k_n];

    let scan = |k: usize, others: &[usize], chosen: &[Option<usize>]| -> Vec<f64> {
        let fixed: Vec<&CVec> = others
            .iter()
            .map(|&i| &eff.cols[i][chosen[i].expect("fixed UE has a beam")])
            .collect();
        (0..codebook.len())
            .into_par_iter()
            .map(|b| {
                let mut cols = fixed.clone();
                cols.push(&eff.cols[k][b]);
                last_column_sinr(&stack_columns(&cols), n0, es)
            })
            .collect()
    };

    let mut pass1 = Vec::with_capacity(k_n);
    for (pos, &k) in order.iter().enumerate() {
        let candidates = scan(k, &order[..pos], &chosen);
        let b = argmax(&candidates);
        chosen[k] = Some(b);
        pass1.push(IaStep {
            ue: k,
            incumbent: None,
            incumbent_objective: None,
            chosen: b,
            objective: candidates[b],
            candidates,
        });
    }

    let mut pass2 = Vec::with_capacity(k_n);
    for &k in order.iter().rev() {
        let others: Vec<usize> = order.iter().copied().filter(|&i| i != k).collect();
        let candidates = scan(k, &others, &chosen);
        let inc = chosen[k].unwrap();
        let b = argmax(&candidates);
        chosen[k] = Some(b);
        pass2.push(IaStep {
            ue: k,
            incumbent: Some(inc),
            incumbent_objective: Some(candidates[inc]),
            chosen: b,
            objective: candidates[b],
            candidates,
        });
    }

    let idx: Vec<usize> = chosen.into_iter().map(Option::unwrap).collect();
    Ok(IaOutcome {
        assignment: BeamAssignment::from_indices(Method::AnalogIa, &idx, codebook),
        order,
        pass1,
        pass2,
    })
}

/// SINR of every UE on the surrogate with full LMMSE over all UEs.
pub fn surrogate_sinrs(surrogate: &SurrogateMatrix, beams: &[CVec], n0: f64, es: f64) -> Vec<f64> {
    let cols: Vec<CVec> = beams
        .iter()
        .enumerate()
        .map(|(k, p)| surrogate.ue_block(k) * p)
        .collect();
    let refs: Vec<&CVec> = cols.iter().collect();
    let g = stack_columns(&refs);
    match lmmse(&g, n0, es) {
        Ok(w) => sinr_all(&g, &w, n0, es),
        Err(_) => vec![0.0; beams.len()],
    }
}

pub fn min_sinr(surrogate: &SurrogateMatrix, beams: &[CVec], n0: f64, es: f64) -> f64 {
    surrogate_sinrs(surrogate, beams, n0, es)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    pub assignment: BeamAssignment,
    pub min_sinr: f64,
    pub evaluated: u64,
}

/// Globally max-min optimal codebook assignment by full enumeration of the
/// `B^K` lattice. Only meant for tiny instances.
pub fn exhaustive_maxmin(
    surrogate: &SurrogateMatrix,
    codebook: &BeamCodebook,
    n0: f64,
    es: f64,
    max_combinations: u64,
) -> Result<ExhaustiveOutcome, BaError> {
    let (b_n, k_n) = (codebook.len() as u64, surrogate.ues as u32);
    let total = b_n
        .checked_pow(k_n)
        .filter(|&t| t <= max_combinations)
        .ok_or_else(|| BaError::CombinatorialBudgetExceeded {
            needed: format!("{b_n}^{k_n}"),
            budget: max_combinations,
        })?;
    let eff = EffectiveColumns::new(surrogate, codebook);
    let k_n = k_n as usize;

    let eval = |code: u64| -> f64 {
        let mut rest = code;
        let mut cols = Vec::with_capacity(k_n);
        // UE 0 is the most significant digit, so codes enumerate
        // assignments in lexicographic order.
        let mut digits = vec![0usize; k_n];
        for d in digits.iter_mut().rev() {
            *d = (rest % b_n) as usize;
            rest /= b_n;
        }
        for (k, &b) in digits.iter().enumerate() {
            cols.push(&eff.cols[k][b]);
        }
        let g = stack_columns(&cols);
        match lmmse(&g, n0, es) {
            Ok(w) => sinr_all(&g, &w, n0, es).into_iter().fold(f64::INFINITY, f64::min),
            Err(_) => 0.0,
        }
    };
    let values: Vec<f64> = (0..total).into_par_iter().map(eval).collect();
    let best = argmax(&values) as u64;
    let mut rest = best;
    let mut idx = vec![0usize; k_n];
    for d in idx.iter_mut().rev() {
        *d = (rest % b_n) as usize;
        rest /= b_n;
    }
    Ok(ExhaustiveOutcome {
        assignment: BeamAssignment::from_indices(Method::Exhaustive, &idx, codebook),
        min_sinr: values[best as usize],
        evaluated: total,
    })
}

/// Single-antenna UEs: `p_k = 1`.
pub fn single_antenna_baseline(ues: usize) -> BeamAssignment {
    BeamAssignment::from_vectors(
        Method::SingleAntenna,
        vec![CVec::from_element(1, ONE); ues],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot_h;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rand_surrogate(l: usize, na: usize, k: usize, nu: usize, seed: u64) -> SurrogateMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = CMat::from_fn(l * na, k * nu, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        SurrogateMatrix::from_matrix(m, l, na, k, nu)
    }

    #[test]
    fn codebook_shapes() {
        let cb = build_codebook(4, 1);
        assert_eq!(cb.angles, vec![0.0]);
        // φ = 0: entries exp(−jπm)/2
        for m in 0..4 {
            let want = num_complex::Complex64::from_polar(0.5, -std::f64::consts::PI * m as f64);
            assert!((cb.beams[0][m] - want).norm() < 1e-15);
        }
        let cb = build_codebook(1, 5);
        assert!(cb.beams.iter().all(|b| b.len() == 1 && (b[0] - ONE).norm() < 1e-15));
    }

    #[test]
    fn large_codebook_gram() {
        let cb = build_codebook(8, 16);
        for i in 0..16 {
            assert!((vec_norm2(&cb.beams[i]) - 1.0).abs() < 1e-14);
            for j in 0..16 {
                let ip = dot_h(&cb.beams[i], &cb.beams[j]).norm();
                if i == j {
                    assert!((ip - 1.0).abs() < 1e-14);
                } else {
                    assert!(ip < 1.0 - 1e-6, "beams {i},{j} collide: {ip}");
                }
            }
        }
    }

    #[test]
    fn materialized_p_is_orthonormal() {
        let cb = build_codebook(4, 8);
        let a = BeamAssignment::from_indices(Method::AnalogIu, &[3, 0, 7], &cb);
        let p = a.materialize();
        assert_eq!(p.shape(), (12, 3));
        assert!(crate::linalg::rel_err(&(p.adjoint() * &p), &CMat::identity(3, 3)) < 1e-14);
        let s = single_antenna_baseline(4).materialize();
        assert_eq!(s, CMat::identity(4, 4));
    }

    #[test]
    fn digital_rank_one_recovers_right_vector() {
        let u = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, -1.0), c(0.5, 0.5), c(2.0, 0.0)]);
        let w = build_codebook(3, 7).beams[2].clone();
        let m = &u * w.adjoint() * c(1.7, 0.0);
        let s = SurrogateMatrix::from_matrix(m, 2, 2, 1, 3);
        let a = digital_iu(&s).unwrap();
        assert!((dot_h(&a.vectors()[0], &w).norm() - 1.0).abs() < 1e-12);
        let p = &a.vectors()[0];
        assert!(p[0].im.abs() < 1e-15 && p[0].re >= 0.0);
    }

    #[test]
    fn digital_objective_is_sigma_max() {
        let s = rand_surrogate(3, 2, 4, 4, 11);
        let a = digital_iu(&s).unwrap();
        for k in 0..4 {
            let hk = s.ue_block(k);
            let svd = hk.clone().svd(false, false);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let obj = vec_norm2(&(&hk * &a.vectors()[k])).sqrt();
            assert!((obj - smax).abs() < 1e-10 * smax);
        }
    }

    #[test]
    fn digital_orthonormal_columns() {
        // H̄_k with orthonormal columns: every unit vector is optimal, σ = 1.
        let mut m = CMat::zeros(4, 2);
        m[(0, 0)] = ONE;
        m[(3, 1)] = c(0.0, 1.0);
        let s = SurrogateMatrix::from_matrix(m * c(2.0, 0.0), 2, 2, 1, 2);
        let a = digital_iu(&s).unwrap();
        let obj = vec_norm2(&(s.ue_block(0) * &a.vectors()[0])).sqrt();
        assert!((obj - 2.0).abs() < 1e-12);
    }

    #[test]
    fn digital_rejects_zero_channel() {
        let s = SurrogateMatrix::from_matrix(CMat::zeros(2, 4), 1, 2, 2, 2);
        assert_eq!(digital_iu(&s), Err(BaError::DegenerateChannel(0)));
    }

    #[test]
    fn analog_iu_exact_match() {
        let cb = build_codebook(4, 8);
        let u = CVec::from_vec(vec![c(1.0, 0.0), c(0.3, -1.0)]);
        let m = &u * cb.beams[5].adjoint();
        let s = SurrogateMatrix::from_matrix(m, 1, 2, 1, 4);
        assert_eq!(analog_iu(&s, &cb).indices().unwrap(), vec![5]);
    }

    #[test]
    fn analog_iu_brute_force_and_separable() {
        let cb = build_codebook(4, 8);
        let s = rand_surrogate(2, 3, 4, 4, 12);
        let got = analog_iu(&s, &cb).indices().unwrap();
        for k in 0..4 {
            let hk = s.ue_block(k);
            let mut best = (0, f64::MIN);
            for b in 0..8 {
                let g = vec_norm2(&(&hk * &cb.beams[b]));
                if g > best.1 {
                    best = (b, g);
                }
            }
            assert_eq!(got[k], best.0);
            let alone = SurrogateMatrix::from_matrix(hk.clone(), 2, 3, 1, 4);
            assert_eq!(analog_iu(&alone, &cb).indices().unwrap()[0], got[k]);
        }
    }

    #[test]
    fn sinr_partial_empty_set_is_snr() {
        let s = rand_surrogate(2, 2, 2, 3, 13);
        let p = build_codebook(3, 4).beams[1].clone();
        let (n0, es) = (0.2, 1.5);
        let got = sinr_partial(1, &p, &[], &s, n0, es).unwrap();
        let want = vec_norm2(&(s.ue_block(1) * &p)) * es / n0;
        assert!((got / want - 1.0).abs() < 1e-12);
        let tiny = sinr_partial(1, &p, &[], &s, 1e30, es).unwrap();
        assert!(tiny < 1e-25);
    }

    #[test]
    fn sinr_partial_two_ue_oracle() {
        // Hand expansion of the 2-UE case: W = G(GᴴG + ρI)⁻¹ with the 2×2
        // inverse written out.
        let s = rand_surrogate(2, 2, 2, 2, 14);
        let cb = build_codebook(2, 4);
        let (n0, es) = (0.3, 1.0);
        let (p0, p1) = (cb.beams[1].clone(), cb.beams[3].clone());
        let g0 = s.ue_block(0) * &p0;
        let g1 = s.ue_block(1) * &p1;
        let rho = n0 / es;
        let a = dot_h(&g0, &g0) + rho;
        let b = dot_h(&g0, &g1);
        let d = dot_h(&g1, &g1) + rho;
        let det = a * d - b * b.conj();
        // second column of the inverse: (−b, a)/det
        let w1 = (&g0 * (-b) + &g1 * a) / det;
        let sig = es * dot_h(&w1, &g1).norm_sqr();
        let int = es * dot_h(&w1, &g0).norm_sqr();
        let want = sig / (int + n0 * vec_norm2(&w1));
        let got = sinr_partial(1, &p1, &[(0, p0)], &s, n0, es).unwrap();
        assert!((got / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sinr_partial_dimension_checks() {
        let s = rand_surrogate(1, 2, 2, 3, 15);
        let bad = CVec::from_element(2, ONE);
        assert!(matches!(sinr_partial(0, &bad, &[], &s, 1.0, 1.0), Err(BaError::Dimension(_))));
        let good = CVec::from_element(3, ONE);
        assert!(sinr_partial(0, &good, &[(0, good.clone())], &s, 1.0, 1.0).is_err());
    }

    #[test]
    fn ia_single_ue_equals_iu() {
        let cb = build_codebook(4, 8);
        for seed in 0..10 {
            let s = rand_surrogate(3, 2, 1, 4, 100 + seed);
            let ia = analog_ia(&s, &cb, 0.1, 1.0).unwrap();
            assert_eq!(ia.assignment.indices(), analog_iu(&s, &cb).indices());
        }
    }

    #[test]
    fn ia_disjoint_support_equals_iu() {
        let cb = build_codebook(4, 8);
        let mut s = rand_surrogate(3, 2, 3, 4, 21);
        // UE k only reaches AP k
        for l in 0..3 {
            for k in 0..3 {
                if l != k {
                    s.matrix.view_mut((l * 2, k * 4), (2, 4)).fill(ZERO);
                }
            }
        }
        let ia = analog_ia(&s, &cb, 0.05, 1.0).unwrap();
        assert_eq!(ia.assignment.indices(), analog_iu(&s, &cb).indices());
    }

    #[test]
    fn ia_pass_two_never_worsens_and_matches_brute_force() {
        let cb = build_codebook(3, 4);
        for seed in 0..20 {
            let s = rand_surrogate(2, 2, 2, 3, 200 + seed);
            let (n0, es) = (0.5, 1.0);
            let ia = analog_ia(&s, &cb, n0, es).unwrap();
            assert_eq!(ia.pass2.len(), 2);
            for step in &ia.pass2 {
                assert!(step.objective >= step.incumbent_objective.unwrap());
            }
            // The final UE of pass 2 holds the best response against the
            // other UE's final beam over all 16 pairs.
            let last = ia.pass2.last().unwrap();
            let other = 1 - last.ue;
            let ob = ia.assignment.indices().unwrap()[other];
            let mut best = f64::MIN;
            for b in 0..4 {
                let mut beams = vec![cb.beams[0].clone(); 2];
                beams[other] = cb.beams[ob].clone();
                beams[last.ue] = cb.beams[b].clone();
                best = best.max(surrogate_sinrs(&s, &beams, n0, es)[last.ue]);
            }
            assert!((last.objective - best).abs() <= 1e-9 * best);
        }
    }

    #[test]
    fn ia_orders_by_sigma() {
        let mut s = rand_surrogate(2, 2, 3, 2, 31);
        s.matrix.columns_mut(2, 2).scale_mut(10.0);
        s.matrix.columns_mut(0, 2).scale_mut(0.1);
        let ia = analog_ia(&s, &build_codebook(2, 4), 0.1, 1.0).unwrap();
        assert_eq!(ia.order, vec![1, 2, 0]);
        assert_eq!(ia.pass2.iter().map(|s| s.ue).collect::<Vec<_>>(), vec![0, 2, 1]);
    }

    #[test]
    fn exhaustive_small_cases() {
        let cb = build_codebook(2, 2);
        let s = rand_surrogate(2, 2, 2, 2, 41);
        let ex = exhaustive_maxmin(&s, &cb, 0.2, 1.0, 100).unwrap();
        assert_eq!(ex.evaluated, 4);
        for b0 in 0..2 {
            for b1 in 0..2 {
                let m = min_sinr(&s, &[cb.beams[b0].clone(), cb.beams[b1].clone()], 0.2, 1.0);
                assert!(ex.min_sinr >= m);
            }
        }
        let one = rand_surrogate(2, 2, 1, 4, 42);
        let cb4 = build_codebook(4, 6);
        let ex = exhaustive_maxmin(&one, &cb4, 0.2, 1.0, 100).unwrap();
        assert_eq!(ex.assignment.indices(), analog_iu(&one, &cb4).indices());
    }

    #[test]
    fn exhaustive_dominates_greedy() {
        let cb = build_codebook(4, 4);
        for seed in 0..5 {
            let s = rand_surrogate(2, 2, 3, 4, 300 + seed);
            let ex = exhaustive_maxmin(&s, &cb, 0.3, 1.0, 1000).unwrap();
            let ia = analog_ia(&s, &cb, 0.3, 1.0).unwrap();
            let m = min_sinr(&s, ia.assignment.vectors(), 0.3, 1.0);
            assert!(ex.min_sinr >= m && m >= 0.0);
        }
    }

    #[test]
    fn exhaustive_budget_guard() {
        let cb = build_codebook(2, 8);
        let s = rand_surrogate(1, 2, 4, 2, 43);
        assert!(matches!(
            exhaustive_maxmin(&s, &cb, 1.0, 1.0, 4095),
            Err(BaError::CombinatorialBudgetExceeded { .. })
        ));
    }

    #[test]
    fn record_roundtrip() {
        let cb = build_codebook(4, 8);
        let a = BeamAssignment::from_indices(Method::AnalogIa, &[0, 7, 3], &cb);
        let text = a.to_record();
        assert!(text.contains("ue 2 index 8"));
        assert_eq!(BeamAssignment::from_record(&text, Some(&cb)).unwrap(), a);
        assert!(BeamAssignment::from_record(&text, None).is_err());

        let s = rand_surrogate(2, 2, 2, 4, 44);
        let d = digital_iu(&s).unwrap();
        let back = BeamAssignment::from_record(&d.to_record(), None).unwrap();
        assert_eq!(back, d);
        assert!(BeamAssignment::from_record("method x", None).is_err());
    }
}
