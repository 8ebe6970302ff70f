//! Small complex linear-algebra helpers shared by the simulator modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Squared Frobenius norm.
pub fn fro2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn fro(m: &CMat) -> f64 {
    fro2(m).sqrt()
}

pub fn vec_norm2(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `‖a - b‖_F / ‖b‖_F`, falling back to the absolute error when `b` is zero.
pub fn rel_err(a: &CMat, b: &CMat) -> f64 {
    let num = fro(&(a - b));
    let den = fro(b);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Leading right-singular vector and its singular value.
///
/// The returned vector is unit norm with its first non-negligible entry
/// rotated onto the non-negative real axis, so the result is deterministic.
pub fn leading_right_singular(m: &CMat) -> (f64, CVec) {
    let n = m.ncols();
    // The Gram route keeps the SVD on an n×n Hermitian matrix, which is what
    // the beam dimension (n_UE) is.
    let gram = m.adjoint() * m;
    let eig = gram.symmetric_eigen();
    let mut best = 0;
    for i in 1..n {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut v: CVec = eig.eigenvectors.column(best).into_owned();
    let norm = vec_norm2(&v).sqrt();
    if norm > 0.0 {
        v /= Complex64::from(norm);
    }
    normalize_phase(&mut v);
    let sigma = vec_norm2(&(m * &v)).sqrt();
    (sigma, v)
}

/// Rotates `v` so its first entry with magnitude above 1e-12 is real and non-negative.
pub fn normalize_phase(v: &mut CVec) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(pivot) = v.iter().find(|z| z.norm() > 1e-12 * scale) {
        let rot = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
}

/// Solves `a x = b` for Hermitian positive definite `a`.
///
/// Returns `None` when `a` is indefinite or numerically singular (a
/// Cholesky pivot below `n·ε` times the largest diagonal entry).
pub fn hpd_solve(a: CMat, b: &CMat) -> Option<CMat> {
    Some(checked_cholesky(a)?.solve(b))
}

pub fn hpd_solve_vec(a: CMat, b: &CVec) -> Option<CVec> {
    Some(checked_cholesky(a)?.solve(b))
}

fn checked_cholesky(a: CMat) -> Option<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].re).fold(0.0, f64::max);
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let floor = n as f64 * f64::EPSILON * scale;
    if (0..n).any(|i| l[(i, i)].norm_sqr() <= floor) {
        return None;
    }
    Some(chol)
}

/// Hermitian inner product `a^H b`.
pub fn dot_h(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_singular_of_rank_one() {
        let u = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)]);
        let w = CVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let m = &u * w.adjoint();
        let (sigma, v) = leading_right_singular(&m);
        assert!((sigma - vec_norm2(&u).sqrt()).abs() < 1e-12);
        assert!((dot_h(&v, &w).norm() - 1.0).abs() < 1e-12);
        assert!(v[0].im.abs() < 1e-15 && v[0].re >= 0.0);
    }

    #[test]
    fn leading_singular_matches_svd() {
        let m = CMat::from_fn(5, 3, |i, j| c((i * 3 + j) as f64 * 0.3 - 1.0, (i as f64 - j as f64).sin()));
        let (sigma, _) = leading_right_singular(&m);
        assert!((sigma - spectral_norm(&m)).abs() < 1e-10 * sigma);
    }

    #[test]
    fn hpd_solve_rejects_singular() {
        let a = CMat::zeros(2, 2);
        assert!(hpd_solve(a, &CMat::identity(2, 2)).is_none());
    }
}
