//! Small dense linear-algebra kernels.
//!
//! The systems solved here are dense and tiny (|S| x |S|), so a textbook LU
//! factorization with partial pivoting beats pulling in a BLAS/LAPACK
//! backend and stays generic over the scalar type.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solve `a x = b` by LU factorization with partial pivoting.
pub fn lu_solve<T: Scalar>(a: &Array2<T>, b: &Array1<T>) -> Result<Array1<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::ShapeMismatch("lu_solve needs a square matrix and a matching rhs"));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        // Partial pivot: largest |entry| in column k at or below the diagonal.
        let mut p = k;
        let mut best = lu[[k, k]].abs();
        for i in k + 1..n {
            let cand = lu[[i, k]].abs();
            if cand > best {
                best = cand;
                p = i;
            }
        }
        if !(best > T::zero()) || !best.is_finite() {
            return Err(Error::SingularSystem);
        }
        if p != k {
            for j in 0..n {
                lu.swap([k, j], [p, j]);
            }
            x.swap(k, p);
        }
        let piv = lu[[k, k]];
        for i in k + 1..n {
            let m = lu[[i, k]] / piv;
            lu[[i, k]] = m;
            for j in k + 1..n {
                let upd = m * lu[[k, j]];
                lu[[i, j]] = lu[[i, j]] - upd;
            }
            x[i] = x[i] - m * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in i + 1..n {
            acc = acc - lu[[i, j]] * x[j];
        }
        x[i] = acc / lu[[i, i]];
    }
    Ok(x)
}

/// Residual `max_i |(a x - b)_i|` of a candidate solution.
pub fn residual_linf<T: Scalar>(a: &Array2<T>, x: &Array1<T>, b: &Array1<T>) -> T {
    let mut worst = T::zero();
    for i in 0..a.nrows() {
        let mut acc = -b[i];
        for j in 0..a.ncols() {
            acc = acc + a[[i, j]] * x[j];
        }
        worst = worst.max(acc.abs());
    }
    worst
}
