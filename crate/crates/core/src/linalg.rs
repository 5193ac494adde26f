//! Small dense solves behind the per-block regressions.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};

/// Outcome of a least-squares solve; `rank_deficient` is set when the
/// pseudo-inverse had to drop singular directions.
pub(crate) struct LsSolution {
    pub x: DVector<f64>,
    pub rank_deficient: bool,
}

/// Solves `(G + lambda I) x = c` for symmetric positive semi-definite `G`.
///
/// Falls back to an eigen-decomposition pseudo-inverse if the shifted matrix is
/// not numerically positive definite.
pub(crate) fn ridge_normal(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    lambda: f64,
) -> Option<DVector<f64>> {
    let k = gram.nrows();
    if k == 0 {
        return Some(DVector::zeros(0));
    }
    let mut shifted = gram.clone();
    for i in 0..k {
        shifted[(i, i)] += lambda;
    }
    if let Some(ch) = Cholesky::new(shifted.clone()) {
        let x = ch.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    let eig = shifted.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let cut = top * k as f64 * f64::EPSILON;
    let proj = eig.eigenvectors.transpose() * rhs;
    let scaled = DVector::from_iterator(
        k,
        proj.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(&p, &e)| if e.abs() > cut { p / e } else { 0.0 }),
    );
    let x = &eig.eigenvectors * scaled;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Minimum-norm least squares `argmin ||a x - b||` via SVD.
pub(crate) fn lstsq(a: DMatrix<f64>, b: &DVector<f64>) -> Option<LsSolution> {
    let (r, k) = a.shape();
    if k == 0 {
        return Some(LsSolution {
            x: DVector::zeros(0),
            rank_deficient: false,
        });
    }
    let svd = SVD::new(a, true, true);
    let top = svd
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s));
    let eps = top * r.max(k) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd.solve(b, eps).ok()?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(LsSolution {
        x,
        rank_deficient: rank < k,
    })
}
