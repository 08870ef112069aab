//! Dense linear-algebra helpers shared by the spectral and GP code paths.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{Cholesky, Eigh, UPLO};

/// Squared Euclidean distances between rows of `a` (n x d) and rows of `b` (m x d).
pub(crate) fn pairwise_sq_dists(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = a.nrows();
    let m = b.nrows();
    let a_sq: Array1<f64> = a.map_axis(Axis(1), |r| r.dot(&r));
    let b_sq: Array1<f64> = b.map_axis(Axis(1), |r| r.dot(&r));
    let cross = a.dot(&b.t());
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            // Clamp: cancellation can push tiny true distances below zero.
            out[[i, j]] = (a_sq[i] + b_sq[j] - 2.0 * cross[[i, j]]).max(0.0);
        }
    }
    out
}

/// Median of a sample; averages the two central order statistics for even length.
pub(crate) fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in median input"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn cholesky_lower(a: &Array2<f64>) -> Result<Array2<f64>> {
    a.cholesky(UPLO::Lower).map_err(|e| {
        Error::Conditioning(format!(
            "Cholesky factorization failed ({e}); consider a larger noise variance"
        ))
    })
}

/// Solves L x = b with L lower triangular.
pub(crate) fn solve_lower(l: &Array2<f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= l[[i, j]] * x[j];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves L^T x = b with L lower triangular.
pub(crate) fn solve_lower_transpose(l: &Array2<f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= l[[j, i]] * x[j];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves A x = b given the lower Cholesky factor of A.
pub(crate) fn cholesky_solve_vec(l: &Array2<f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let y = solve_lower(l, b);
    solve_lower_transpose(l, y.view())
}

/// Solves A X = B column by column given the lower Cholesky factor of A.
pub(crate) fn cholesky_solve_mat(l: &Array2<f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((b.nrows(), b.ncols()));
    for (j, col) in b.axis_iter(Axis(1)).enumerate() {
        let x = cholesky_solve_vec(l, col);
        out.column_mut(j).assign(&x);
    }
    out
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
pub(crate) fn eigh_descending(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (vals, vecs) = a
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Eigensolver(format!("symmetric eigendecomposition failed ({e})")))?;
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).expect("NaN eigenvalue"));
    let sorted_vals = Array1::from_iter(order.iter().map(|&i| vals[i]));
    let mut sorted_vecs = Array2::zeros((n, n));
    for (k, &i) in order.iter().enumerate() {
        sorted_vecs.column_mut(k).assign(&vecs.column(i));
    }
    Ok((sorted_vals, sorted_vecs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pairwise_matches_direct_loop() {
        let a = array![[1.0, 2.0], [3.0, -1.0], [0.0, 0.5]];
        let b = array![[2.0, 2.0], [-1.0, 4.0]];
        let d = pairwise_sq_dists(a.view(), b.view());
        for i in 0..3 {
            for j in 0..2 {
                let dx = a[[i, 0]] - b[[j, 0]];
                let dy = a[[i, 1]] - b[[j, 1]];
                assert!((d[[i, j]] - (dx * dx + dy * dy)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn cholesky_solve_recovers_solution() {
        let a = array![[4.0, 1.0, 0.2], [1.0, 3.0, 0.5], [0.2, 0.5, 2.0]];
        let x_true = array![1.0, -2.0, 0.5];
        let b = a.dot(&x_true);
        let l = cholesky_lower(&a).unwrap();
        let x = cholesky_solve_vec(&l, b.view());
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_lower(&a).is_err());
    }

    #[test]
    fn eigh_descending_reconstructs() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.5]];
        let (vals, vecs) = eigh_descending(&a).unwrap();
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        // A == V diag(vals) V^T
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for i in 0..3 {
            for j in 0..3 {
                assert!((recon[[i, j]] - a[[i, j]]).abs() < 1e-10);
            }
        }
    }
}
