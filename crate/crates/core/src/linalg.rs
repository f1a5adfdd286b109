//! Dense symmetric linear algebra used by every solver.
//!
//! Factorizations come from `nalgebra`; the orthonormal complement is an
//! explicit Householder reflector so that its identities hold by
//! construction rather than by an iterative process.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor used for positive-definiteness decisions.
pub const DEFAULT_EPS_PD: f64 = 1e-12;

/// Relative singular-value floor used by [`numeric_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// Construction rejects matrices whose smallest Cholesky pivot falls below
/// `eps_pd` times the largest diagonal entry, which catches numerically
/// singular matrices that a plain Cholesky would still accept.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactorization {
    pub fn new(m: &DMatrix<f64>, eps_pd: f64) -> Option<Self> {
        if !m.is_square() {
            return None;
        }
        let p = m.nrows();
        if p == 0 {
            return Cholesky::new(m.clone()).map(|chol| Self { chol });
        }
        let scale = m.diagonal().iter().fold(0.0_f64, |a, &x| a.max(x));
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        let chol = Cholesky::new(m.clone())?;
        let l = chol.l_dirty();
        let min_pivot = (0..p).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if min_pivot <= eps_pd * scale {
            return None;
        }
        Some(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// The inverse, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        symmetrize(&self.chol.inverse())
    }
}

/// Solves `M X = B` for symmetric positive definite `M`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "spd_solve: M is {}x{}, B has {} rows",
            m.nrows(),
            m.ncols(),
            b.nrows()
        )));
    }
    let fact = SpdFactorization::new(m, DEFAULT_EPS_PD).ok_or(Error::NotPositiveDefinite { context: "spd_solve" })?;
    Ok(fact.solve(b))
}

/// `M^{-1/2}` through the symmetric eigendecomposition.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("inv_sqrt_spd: matrix not square".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= DEFAULT_EPS_PD * max {
        return Err(Error::NotPositiveDefinite { context: "inv_sqrt_spd" });
    }
    let d = eig.eigenvalues.map(|x| 1.0 / x.sqrt());
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * DMatrix::from_diagonal(&d) * q.transpose())))
}

/// Columns spanning the orthogonal complement of the unit vector `v`.
///
/// Uses the Householder reflector `H = I - 2uu'/(u'u)` with
/// `u = v + sign(v_1) e_1`, so `H e_1 = -sign(v_1) v` and the remaining
/// columns of `H` are orthonormal and orthogonal to `v`.
pub fn orthonormal_complement(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let norm = v.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnitVector { norm });
    }
    let p = v.len();
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut u = v.clone();
    u[0] += sign;
    let uu = 2.0 + 2.0 * v[0].abs();
    let mut s = DMatrix::zeros(p, p.saturating_sub(1));
    for c in 1..p {
        for r in 0..p {
            let delta = if r == c { 1.0 } else { 0.0 };
            s[(r, c - 1)] = delta - 2.0 * u[r] * u[c] / uu;
        }
    }
    Ok(s)
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numeric_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if !(max > 0.0) {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    (eig.min(), eig.max())
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// True when the smallest eigenvalue is not below `-eps * max(1, max eigenvalue)`.
pub fn is_psd(m: &DMatrix<f64>, eps: f64) -> bool {
    let (lo, hi) = eigen_extremes(m);
    lo >= -eps * hi.max(1.0)
}

/// A factor `R` with `R R' = M` for symmetric positive semidefinite `M`.
///
/// Tiny negative eigenvalues from rounding are clamped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d)
}

/// Norm-wise relative difference `max|a - b| / max(max|a|, max|b|)`.
///
/// Two exactly-zero arguments compare as 0.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rel_diff: length mismatch");
    let mut diff = 0.0_f64;
    let mut scale = 0.0_f64;
    for (x, y) in a.iter().zip(b) {
        diff = diff.max((x - y).abs());
        scale = scale.max(x.abs()).max(y.abs());
    }
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
