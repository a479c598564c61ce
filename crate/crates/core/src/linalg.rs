//! Dense linear algebra helpers shared by the generator and the metrics.
//!
//! Everything here works on small (≤ a few dozen columns) `f64` matrices, so
//! we use straightforward symmetric eigendecompositions rather than anything
//! iterative or blocked.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Absolute tolerance when checking that a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Eigenvalues in `[-EIGEN_CLAMP_TOL, 0)` are treated as rounding noise and
/// clamped to zero; anything more negative is a genuine PSD violation.
pub const EIGEN_CLAMP_TOL: f64 = 1e-8;

/// Ridge added to a fitted covariance when it is (numerically) singular.
pub const COV_RIDGE: f64 = 1e-6;

/// A fitted covariance counts as singular when its smallest eigenvalue
/// falls below this.
const SINGULAR_EIG_TOL: f64 = 1e-10;

/// Check symmetry entry-wise against an absolute tolerance.
pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Replace `a` with its symmetric part `(a + aᵀ) / 2`.
fn symmetrize(a: &mut DMatrix<f64>) {
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Computed by eigendecomposition: `A = V Λ Vᵀ ⇒ √A = V √Λ Vᵀ`. Eigenvalues
/// slightly below zero (within [`EIGEN_CLAMP_TOL`]) are clamped to zero so
/// that covariances assembled from finite samples don't spuriously fail.
///
/// # Errors
///
/// * [`Error::Shape`] if `a` is not square.
/// * [`Error::Validation`] if `a` is asymmetric beyond [`SYMMETRY_TOL`] or
///   contains non-finite entries.
/// * [`Error::NotPsd`] if any eigenvalue is below `-EIGEN_CLAMP_TOL`.
pub fn matrix_sqrt_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::shape(format!(
            "matrix square root needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("matrix contains non-finite entries"));
    }
    if !is_symmetric(a, SYMMETRY_TOL) {
        return Err(Error::validation(format!(
            "matrix is asymmetric beyond tolerance {SYMMETRY_TOL:e}"
        )));
    }

    let mut sym = a.clone();
    symmetrize(&mut sym);
    let eig = sym.symmetric_eigen();

    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -EIGEN_CLAMP_TOL {
            return Err(Error::NotPsd(format!(
                "eigenvalue {lambda:e} below -{EIGEN_CLAMP_TOL:e}"
            )));
        }
        roots[i] = lambda.max(0.0).sqrt();
    }

    let v = &eig.eigenvectors;
    let mut sqrt = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut sqrt);
    Ok(sqrt)
}

/// Maximum-likelihood mean and unbiased covariance of row-major samples,
/// with a ridge of [`COV_RIDGE`]` · I` added whenever the raw covariance is
/// numerically singular (always the case for `n < 2` or duplicated points).
///
/// Returns `(mean, covariance)`.
pub fn fit_gaussian(samples: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = samples.nrows();
    let d = samples.ncols();
    if n == 0 || d == 0 {
        return Err(Error::validation("cannot fit a Gaussian to an empty sample"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("samples contain non-finite entries"));
    }

    let mut mean = DVector::zeros(d);
    for r in 0..n {
        mean += samples.row(r).transpose();
    }
    mean /= n as f64;

    let mut cov = DMatrix::zeros(d, d);
    if n >= 2 {
        for r in 0..n {
            let delta = samples.row(r).transpose() - &mean;
            cov.syger(1.0, &delta, &delta, 1.0);
        }
        cov /= (n - 1) as f64;
        // syger fills only the lower triangle; mirror it.
        for i in 0..d {
            for j in (i + 1)..d {
                cov[(i, j)] = cov[(j, i)];
            }
        }
    }

    let min_eig = cov.clone().symmetric_eigen().eigenvalues.min();
    if n < 2 || min_eig < SINGULAR_EIG_TOL {
        for i in 0..d {
            cov[(i, i)] += COV_RIDGE;
        }
    }
    Ok((mean, cov))
}

/// Haar-ish random orthogonal matrix via QR of a Gaussian matrix.
///
/// Used to generate rotated covariances in the synthetic tasks and to check
/// rotation invariance of the Fréchet distance.
pub fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    qr.q()
}
