//! Small dense linear-algebra helpers shared by the filter, the trainer and
//! the analysis code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// First diagonal jitter tried when a symmetric system fails to factorize.
pub const JITTER_START: f64 = 1e-9;
/// Largest jitter tried before giving up with [`Error::NonInvertible`].
pub const JITTER_MAX: f64 = 1e-3;

/// Cholesky factorization of a symmetric positive (semi-)definite matrix.
///
/// The plain matrix is tried first. On failure a diagonal jitter of 1e-9 is
/// added and multiplied by ten until the factorization succeeds or the
/// jitter would exceed 1e-3.
pub fn jittered_cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(chol);
    }
    let n = a.nrows();
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-12) {
        let shifted = a + DMatrix::identity(n, n) * jitter;
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok(chol);
        }
        jitter *= 10.0;
    }
    Err(Error::NonInvertible {
        max_jitter: JITTER_MAX,
    })
}

/// Solves `a x = b` for symmetric positive definite `a` with the jitter policy.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(jittered_cholesky(a)?.solve(b))
}

/// Inverse of a symmetric positive definite matrix with the jitter policy.
pub fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = jittered_cholesky(a)?.inverse();
    symmetrize_in_place(&mut inv);
    Ok(inv)
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Largest absolute difference between `m` and its transpose.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut sym = m.clone();
    symmetrize_in_place(&mut sym);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

const ROUND_OFF: f64 = 1e-13;

/// Projects a square matrix onto the positive semidefinite cone.
///
/// The matrix is symmetrized as `(m + mᵀ)/2` and negative eigenvalues are
/// clipped to zero. A symmetric input that is already PSD is returned as is,
/// where eigenvalues within round-off of zero (relative to the largest one)
/// count as nonnegative; this makes the repair idempotent.
pub fn psd_repair(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(m.is_square(), "psd_repair needs a square matrix");
    let mut sym = m.clone();
    symmetrize_in_place(&mut sym);
    if sym.nrows() == 0 {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l.abs()));
    let floor = -ROUND_OFF * scale;
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    symmetrize_in_place(&mut out);
    out
}

/// Leading `n` entries of `v` as an owned vector.
pub(crate) fn head(v: &DVector<f64>, n: usize) -> DVector<f64> {
    v.rows(0, n).into_owned()
}

/// Leading `n × n` block of `m` as an owned matrix.
pub(crate) fn leading_block(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    m.view((0, 0), (n, n)).into_owned()
}
