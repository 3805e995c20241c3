//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal on a failed Cholesky factorization.
pub const SPD_JITTER_REL: f64 = 1e-10;

/// Cholesky factorization of a symmetric positive-definite matrix with a
/// single jitter retry: on failure, `jitter = 1e-10 * trace / n` is added to
/// the diagonal and the factorization is attempted once more.
pub fn cholesky_spd(a: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{context}: matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol);
    }
    let n = a.nrows();
    let jitter = SPD_JITTER_REL * a.trace() / n as f64;
    let mut jittered = a.clone();
    for i in 0..n {
        jittered[(i, i)] += jitter;
    }
    jittered
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{context}: matrix not SPD after jitter retry")))
}

/// `log det A` from a Cholesky factor: twice the log of the diagonal of `L`.
pub fn logdet_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    2.0 * acc
}

/// Replace `a` with `(a + a') / 2`, killing roundoff asymmetry.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
}

/// Sample mean and covariance of observations stacked as rows, with
/// divisor `m - 1`. The caller guarantees `rows.nrows() >= 2`. The
/// covariance comes back exactly symmetric (accumulated on the lower
/// triangle, then mirrored).
pub fn sample_mean_cov(rows: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let m = rows.nrows();
    let p = rows.ncols();
    debug_assert!(m >= 2);
    let mean = rows.row_mean().transpose();
    let mut cov = DMatrix::zeros(p, p);
    for k in 0..m {
        let centered = rows.row(k).transpose() - &mean;
        cov.syger(1.0, &centered, &centered, 1.0);
    }
    cov /= m as f64 - 1.0;
    for i in 0..p {
        for j in (i + 1)..p {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    (mean, cov)
}

/// `n` evenly spaced points covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least 2 points");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Trapezoid-rule integral of samples `f` over abscissae `x`.
pub fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), f.len());
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
    }
    acc
}

/// Check that every entry of a matrix is finite.
pub fn require_finite(a: &DMatrix<f64>, context: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{context}: entries must be finite"
        )))
    }
}

/// Check that every entry of a vector is finite.
pub fn require_finite_vec(v: &DVector<f64>, context: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{context}: entries must be finite"
        )))
    }
}
