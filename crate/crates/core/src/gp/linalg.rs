//! Dense helpers shared by the GP and acquisition code.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, Dyn};

/// Initial diagonal jitter, relative to the kernel amplitude.
pub const JITTER_START: f64 = 1e-8;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor of `matrix + jitter * I`. The matrix is first factorized
/// as is; on failure jitter is escalated ×10 from `JITTER_START * scale` up
/// to `JITTER_MAX * scale`.
///
/// Returns the factor and the absolute jitter that was applied.
pub fn jittered_cholesky(matrix: &DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = matrix.nrows();
    if n == 0 {
        let chol = Cholesky::new(DMatrix::zeros(0, 0)).expect("empty matrix factorizes");
        return Ok((chol, 0.0));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "matrix to factorize has non-finite entries",
        ));
    }
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        if chol
            .l_dirty()
            .diagonal()
            .iter()
            .all(|d| d.is_finite() && *d > 0.0)
        {
            return Ok((chol, 0.0));
        }
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            if chol
                .l_dirty()
                .diagonal()
                .iter()
                .all(|d| d.is_finite() && *d > 0.0)
            {
                return Ok((chol, jitter));
            }
        }
        rel *= 10.0;
    }
    Err(Error::numerical(format!(
        "{n}x{n} matrix is not positive definite even with jitter {:.1e}",
        JITTER_MAX * scale
    )))
}

/// Log-determinant of a symmetric positive semi-definite matrix from its
/// singular values.
pub fn logdet_svd(matrix: &DMatrix<f64>) -> Result<f64> {
    if matrix.nrows() == 0 {
        return Ok(0.0);
    }
    let sv = matrix.clone().singular_values();
    let value: f64 = sv.iter().map(|s| s.ln()).sum();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numerical(format!(
            "log-determinant is not finite (smallest singular value {:e})",
            sv.min()
        )))
    }
}

/// Log-determinant of a general square matrix through LU, with its sign.
pub fn logdet_lu(matrix: &DMatrix<f64>) -> (f64, f64) {
    let lu = matrix.clone().lu();
    let u = lu.u();
    let mut sign = if lu.p().determinant::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let mut acc = 0.0;
    for d in u.diagonal().iter() {
        if *d < 0.0 {
            sign = -sign;
        }
        acc += d.abs().ln();
    }
    (acc, sign)
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_escalates_for_singular_matrices() {
        // rank-one matrix needs jitter to factorize
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let (chol, jitter) = jittered_cholesky(&m, 1.0).unwrap();
        assert!(jitter >= JITTER_START);
        let rec = chol.l() * chol.l().transpose();
        assert!((rec - &m).norm() < 1e-3);
    }

    #[test]
    fn positive_definite_matrix_gets_no_jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (chol, jitter) = jittered_cholesky(&m, 1.0).unwrap();
        assert_eq!(jitter, 0.0);
        assert!((chol.l() * chol.l().transpose() - m).norm() < 1e-15);
    }

    #[test]
    fn indefinite_matrix_is_a_numerical_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            jittered_cholesky(&m, 1.0),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn logdets_agree_with_determinant() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let det = m.determinant();
        assert!((logdet_svd(&m).unwrap() - det.ln()).abs() < 1e-12);
        let (ld, sign) = logdet_lu(&m);
        assert_eq!(sign, 1.0);
        assert!((ld - det.ln()).abs() < 1e-12);
        let neg = -m;
        let (ld, sign) = logdet_lu(&neg);
        assert_eq!(sign, -1.0);
        assert!((ld - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_logdet_fails() {
        let m = DMatrix::zeros(2, 2);
        assert!(logdet_svd(&m).is_err());
    }
}
