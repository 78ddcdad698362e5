//! Shared dense linear-algebra helpers.
//!
//! Matrices are stored dense; the model sizes of interest (tens to a few
//! hundred coordinates) never justify sparse machinery. Linear systems are
//! solved by factorization, never by forming explicit inverses, with a
//! condition-number guard that logs a warning above 1e12.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const COND_WARN: f64 = 1e12;
/// Eigenvalue clipping floor used when factoring almost-PSD matrices.
pub const PSD_CLIP: f64 = -1e-10;

fn check_finite_matrix(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Largest absolute eigenvalue of a square real matrix.
///
/// Symmetric inputs (the mean-field matrix in particular, whose spectrum is
/// highly degenerate) go through the symmetric eigensolver; the general case
/// uses a Schur decomposition with bounded iterations so degenerate spectra
/// fail loudly instead of spinning.
pub fn spectral_radius(b: &DMatrix<f64>) -> Result<f64> {
    if b.nrows() != b.ncols() {
        return Err(Error::Dimension {
            what: "spectral_radius",
            expected: b.nrows(),
            found: b.ncols(),
        });
    }
    check_finite_matrix(b, "spectral_radius input")?;
    if b.nrows() == 0 {
        return Err(Error::validation("spectral_radius of empty matrix"));
    }
    if is_symmetric(b, 1e-12) {
        let ev = symmetrize(b).symmetric_eigen().eigenvalues;
        return Ok(ev.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())));
    }
    let schur = nalgebra::linalg::Schur::try_new(b.clone(), 1e-14, 100_000)
        .ok_or_else(|| Error::numerical("Schur iteration did not converge"))?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().map(|c| c.norm()).fold(0.0, f64::max))
}

/// Solves `A x = rhs` by LU with partial pivoting.
///
/// Warns (via stderr) when the SVD condition estimate exceeds [`COND_WARN`];
/// small systems only, so the estimate is cheap.
pub fn solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != rhs.len() {
        return Err(Error::Dimension {
            what: "linear solve",
            expected: a.nrows(),
            found: rhs.len(),
        });
    }
    let lu = a.clone().lu();
    let x = lu
        .solve(rhs)
        .ok_or_else(|| Error::numerical("singular matrix in linear solve".to_string()))?;
    if a.nrows() <= 512 {
        if let Some(svd) = nalgebra::linalg::SVD::try_new(a.clone(), false, false, 1e-12, 10_000) {
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin > 0.0 && smax / smin > COND_WARN {
                eprintln!(
                    "warning: linear solve condition number {:.3e} exceeds {:.0e}",
                    smax / smin,
                    COND_WARN
                );
            }
        }
    }
    Ok(x)
}

/// Stationary mean `(I - B)^{-1} mu` of a VAR(1), by linear solve.
pub fn var_stationary_mean(b: &DMatrix<f64>, mu: &DVector<f64>) -> Result<DVector<f64>> {
    let rho = spectral_radius(b)?;
    if rho >= 1.0 {
        return Err(Error::NonStationary {
            spectral_radius: rho,
        });
    }
    let i = DMatrix::identity(b.nrows(), b.ncols());
    solve(&(i - b), mu)
}

/// Stationary covariance of a VAR(1): the solution of `P = B P B' + Q`.
///
/// Uses the doubling (Smith) iteration, quadratically convergent for
/// spectral radius < 1.
pub fn lyapunov_stationary(b: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rho = spectral_radius(b)?;
    if rho >= 1.0 {
        return Err(Error::NonStationary {
            spectral_radius: rho,
        });
    }
    let mut p = q.clone();
    let mut a = b.clone();
    for _ in 0..128 {
        p = &p + &a * &p * a.transpose();
        a = &a * &a;
        if a.amax() < 1e-300 || a.amax() * a.amax() * p.amax() < 1e-18 {
            break;
        }
    }
    Ok(symmetrize(&p))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root of an almost-PSD matrix by eigendecomposition.
///
/// Eigenvalues in `[PSD_CLIP, 0)` are clipped to zero; anything below the
/// clip floor is rejected.
pub fn sym_psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite_matrix(m, "psd sqrt input")?;
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let min_ev = eig.eigenvalues.min();
    if min_ev < PSD_CLIP {
        return Err(Error::NotPsd {
            min_eigenvalue: min_ev,
        });
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigen().eigenvalues.min()
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spectral_radius_zero_matrix() {
        let z = DMatrix::zeros(4, 4);
        assert_abs_diff_eq!(spectral_radius(&z).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn spectral_radius_frozen_4x4_oracle() {
        // Dense eigensolver oracle value computed offline for this matrix.
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.31, -0.42, 0.11, 0.05, //
                0.27, 0.18, -0.33, 0.09, //
                -0.14, 0.22, 0.40, -0.21, //
                0.08, -0.05, 0.16, -0.29,
            ],
        );
        assert_abs_diff_eq!(
            spectral_radius(&a).unwrap(),
            5.454504756906102259e-01,
            epsilon = 1e-10
        );
    }

    #[test]
    fn spectral_radius_rejects_non_square() {
        let a = DMatrix::zeros(2, 3);
        assert!(spectral_radius(&a).is_err());
    }

    #[test]
    fn spectral_radius_scales_linearly() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 0.1, 0.0, -0.3, 0.4, 0.2, 0.0, 0.1, -0.1]);
        let r = spectral_radius(&a).unwrap();
        let r3 = spectral_radius(&(&a * -2.5)).unwrap();
        assert_abs_diff_eq!(r3, 2.5 * r, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_fixed_point_property() {
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let p = lyapunov_stationary(&b, &q).unwrap();
        let rhs = &b * &p * b.transpose() + &q;
        assert!((p - rhs).amax() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.5, 0.2, 0.1, 0.2, 1.0]);
        let s = sym_psd_sqrt(&m).unwrap();
        assert!((&s * &s - &m).amax() < 1e-10);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(sym_psd_sqrt(&m), Err(Error::NotPsd { .. })));
    }
}
