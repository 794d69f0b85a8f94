//! Small dense linear algebra helpers shared by the copula and rate layers.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Cholesky factorization of a symmetric positive-definite matrix.
/// Returns the lower-triangular factor L with L L^T = R.
pub fn cholesky(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = r.nrows();
    if r.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: r.ncols(),
        });
    }
    let mut l = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut diag = r[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        l[(j, j)] = diag.sqrt();
        for i in (j + 1)..d {
            let mut v = r[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / l[(j, j)];
        }
    }
    Ok(l)
}
