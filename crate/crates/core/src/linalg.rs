//! Small dense helpers that ndarray does not provide.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 500;

pub fn frobenius_norm(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value by power iteration on `A^T A`, started from the
/// all-ones vector.
pub fn spectral_norm(a: ArrayView2<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let av = a.dot(&v);
        let w = a.t().dot(&av);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        let next = wn.sqrt();
        v = w / wn;
        let done = (next - sigma).abs() <= POWER_TOL * next.max(1.0);
        sigma = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient at the final unit iterate
    let av = a.dot(&v);
    av.dot(&av).sqrt()
}

/// Gram-Schmidt orthonormalisation of the rows of `a`.
///
/// Equals the transpose of the thin-QR `Q` factor of `a^T` with the diagonal
/// of `R` taken nonnegative.
pub fn orthonormal_rows(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (m, n) = a.dim();
    if m > n {
        return Err(Error::domain(format!(
            "cannot orthonormalise {m} rows in dimension {n}"
        )));
    }
    let mut q = a.to_owned();
    for i in 0..m {
        let orig = q.row(i).dot(&q.row(i)).sqrt();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for j in 0..i {
                let (done, mut rest) = q.view_mut().split_at(Axis(0), i);
                let qj = done.row(j);
                let mut qi = rest.row_mut(0);
                let c = qi.dot(&qj);
                qi.scaled_add(-c, &qj);
            }
        }
        let nrm = q.row(i).dot(&q.row(i)).sqrt();
        if !(nrm > 1e-12 * orig.max(1e-300) && nrm.is_finite()) {
            return Err(Error::domain(format!(
                "matrix is rank deficient: row {i} is dependent on earlier rows"
            )));
        }
        q.row_mut(i).mapv_inplace(|v| v / nrm);
    }
    Ok(q)
}
