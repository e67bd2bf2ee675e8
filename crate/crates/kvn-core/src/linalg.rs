//! Dense linear-algebra kernels shared by the eigensolvers and the Schmidt
//! machinery.
//!
//! Thin wrappers around `faer` so the rest of the crate speaks plain
//! row-major slices of `Complex64`.  Eigenvector/singular-vector outputs are
//! column-major: vector `k` occupies `out[k * n..(k + 1) * n]`.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{KvnError, Result};

fn to_mat(rows: usize, cols: usize, a: &[C64]) -> Mat<C64> {
    debug_assert_eq!(a.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| a[i * cols + j])
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
/// Only the lower triangle of `a` is read.
pub(crate) fn hermitian_eigen(n: usize, a: &[C64]) -> Result<(Vec<f64>, Vec<C64>)> {
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let eig = to_mat(n, n, a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| KvnError::Convergence(format!("dense Hermitian eigensolve failed: {e:?}")))?;
    let s = eig.S();
    let u = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].re.partial_cmp(&s[j].re).unwrap());
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![C64::new(0.0, 0.0); n * n];
    for (k, &src) in order.iter().enumerate() {
        values.push(s[src].re);
        for i in 0..n {
            vectors[k * n + i] = u[(i, src)];
        }
    }
    Ok((values, vectors))
}

/// Full eigendecomposition of a general complex matrix (right eigenvectors).
pub(crate) fn general_eigen(n: usize, a: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let eig = to_mat(n, n, a)
        .eigen()
        .map_err(|e| KvnError::Convergence(format!("dense eigensolve failed: {e:?}")))?;
    let s = eig.S();
    let u = eig.U();
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![C64::new(0.0, 0.0); n * n];
    for k in 0..n {
        values.push(s[k]);
        for i in 0..n {
            vectors[k * n + i] = u[(i, k)];
        }
    }
    Ok((values, vectors))
}

/// Thin SVD of a row-major `rows x cols` matrix.  Returns
/// `(u, sigma, v)` with `sigma` descending, `u` column-major `rows x k`,
/// `v` column-major `cols x k`, `k = min(rows, cols)`, so that
/// `a = sum_k sigma_k u_k v_k^H`.
pub(crate) fn svd_thin(rows: usize, cols: usize, a: &[C64]) -> Result<(Vec<C64>, Vec<f64>, Vec<C64>)> {
    let k = rows.min(cols);
    if k == 0 {
        return Ok((Vec::new(), Vec::new(), Vec::new()));
    }
    let svd = to_mat(rows, cols, a)
        .thin_svd()
        .map_err(|e| KvnError::Convergence(format!("dense SVD failed: {e:?}")))?;
    let s = svd.S();
    let u = svd.U();
    let v = svd.V();
    let mut sigma = Vec::with_capacity(k);
    let mut uo = vec![C64::new(0.0, 0.0); rows * k];
    let mut vo = vec![C64::new(0.0, 0.0); cols * k];
    for j in 0..k {
        sigma.push(s[j].re);
        for i in 0..rows {
            uo[j * rows + i] = u[(i, j)];
        }
        for i in 0..cols {
            vo[j * cols + i] = v[(i, j)];
        }
    }
    Ok((uo, sigma, vo))
}

/// Singular values only, descending.
pub(crate) fn singular_values(rows: usize, cols: usize, a: &[C64]) -> Result<Vec<f64>> {
    let (_, s, _) = svd_thin(rows, cols, a)?;
    Ok(s)
}
