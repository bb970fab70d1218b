//! Dense solves shared by the critic and natural-gradient code.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues below this fraction of the largest magnitude count as zero.
const RANK_TOL: f64 = 1e-10;

pub(crate) struct Solution {
    pub x: Vec<f64>,
    pub rank_deficient: bool,
}

/// Solves `(a + ridge·I) x = b` for a symmetric positive semidefinite `a`.
///
/// Works in the eigenbasis of `a`. Directions whose damped eigenvalue is
/// numerically zero are dropped, which yields the minimum-norm solution when
/// `a` is singular and `ridge` is zero.
pub(crate) fn solve_symmetric(a: &DMatrix<f64>, b: &[f64], ridge: f64) -> Solution {
    let n = a.nrows();
    debug_assert_eq!(n, b.len());
    if n == 0 {
        return Solution { x: Vec::new(), rank_deficient: false };
    }
    let eig = a.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let tol = RANK_TOL * scale.max(f64::MIN_POSITIVE);
    let rank_deficient = scale == 0.0 || eig.eigenvalues.iter().any(|&l| l <= tol);

    let b = DVector::from_column_slice(b);
    let mut x = DVector::zeros(n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        let damped = lambda + ridge;
        if damped <= tol {
            continue;
        }
        let v = eig.eigenvectors.column(i);
        let coeff = v.dot(&b) / damped;
        x.axpy(coeff, &v, 1.0);
    }
    Solution { x: x.as_slice().to_vec(), rank_deficient }
}

/// Solves the square (possibly non-symmetric) system `(a + ridge·I) x = b`.
///
/// Uses an SVD of the damped matrix and drops numerically zero singular
/// values, so a singular undamped system yields its minimum-norm least-squares
/// solution. `rank_deficient` reports whether `a` itself is numerically
/// singular.
pub(crate) fn solve_general(a: &DMatrix<f64>, b: &[f64], ridge: f64) -> Option<Solution> {
    let n = a.nrows();
    if n == 0 {
        return Some(Solution { x: Vec::new(), rank_deficient: false });
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    let rank_deficient = max == 0.0 || sv.min() <= RANK_TOL * max;
    let damped = a + DMatrix::identity(n, n) * ridge;
    let svd = damped.svd(true, true);
    let eps = RANK_TOL * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let x = svd.solve(&DVector::from_column_slice(b), eps).ok()?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Solution { x: x.as_slice().to_vec(), rank_deficient })
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone().symmetric_eigen().eigenvalues.min()
}
