//! Multivariate normal family with statistic `(x, tril(x x^T))`.
//!
//! The second-order natural block is packed lower-triangular, row-major,
//! diagonal included. The symmetric matrix `S` with `theta . s(x) =
//! x . theta_m + x^T S x` has `S_ii = theta_ii` and `S_ij = theta_ij / 2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::Observation;
use crate::error::{domain, Result};

pub(crate) fn tril_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

pub(crate) fn tril_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub(super) fn statistic(n: usize, x: &[f64]) -> DVector<f64> {
    let mut s = DVector::zeros(n + tril_len(n));
    s.rows_mut(0, n).copy_from_slice(x);
    for i in 0..n {
        for j in 0..=i {
            s[n + tril_index(i, j)] = x[i] * x[j];
        }
    }
    s
}

/// Splits natural parameters into the linear block and the symmetric
/// matrix weighting `x x^T`.
pub(crate) fn unpack(n: usize, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let lin = DVector::from_column_slice(&theta[..n]);
    let mut sym = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = theta[n + tril_index(i, j)];
            if i == j {
                sym[(i, i)] = v;
            } else {
                sym[(i, j)] = 0.5 * v;
                sym[(j, i)] = 0.5 * v;
            }
        }
    }
    (lin, sym)
}

/// Inverse of [`unpack`]; `sym` is symmetrized first.
pub(crate) fn pack(lin: &DVector<f64>, sym: &DMatrix<f64>) -> DVector<f64> {
    let n = lin.len();
    let mut theta = DVector::zeros(n + tril_len(n));
    theta.rows_mut(0, n).copy_from(lin);
    for i in 0..n {
        for j in 0..=i {
            theta[n + tril_index(i, j)] = if i == j { sym[(i, i)] } else { sym[(i, j)] + sym[(j, i)] };
        }
    }
    theta
}

/// Packs a symmetric matrix of second moments `E[x x^T]` into the tril block.
pub(crate) fn pack_moments(first: &DVector<f64>, second: &DMatrix<f64>) -> DVector<f64> {
    let n = first.len();
    let mut eta = DVector::zeros(n + tril_len(n));
    eta.rows_mut(0, n).copy_from(first);
    for i in 0..n {
        for j in 0..=i {
            eta[n + tril_index(i, j)] = 0.5 * (second[(i, j)] + second[(j, i)]);
        }
    }
    eta
}

/// `(E[x], E[x x^T])` from mean parameters.
pub(crate) fn unpack_moments(n: usize, eta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let first = DVector::from_column_slice(&eta[..n]);
    let mut second = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = eta[n + tril_index(i, j)];
            second[(i, j)] = v;
            second[(j, i)] = v;
        }
    }
    (first, second)
}

pub(super) fn validate_natural(n: usize, theta: &[f64]) -> Result<()> {
    let (_, sym) = unpack(n, theta);
    if (sym * -2.0).cholesky().is_some() {
        Ok(())
    } else {
        Err(domain("normal precision matrix is not positive definite"))
    }
}

/// Mean and covariance of the density with natural parameters `theta`.
pub fn moments(n: usize, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (lin, sym) = unpack(n, theta);
    let chol = (sym * -2.0)
        .cholesky()
        .ok_or_else(|| domain("normal precision matrix is not positive definite"))?;
    let cov = chol.inverse();
    let mean = &cov * lin;
    Ok((mean, cov))
}

pub(super) fn log_partition(n: usize, theta: &DVector<f64>) -> Result<f64> {
    let (lin, sym) = unpack(n, theta.as_slice());
    let chol = (sym * -2.0)
        .cholesky()
        .ok_or_else(|| domain("normal precision matrix is not positive definite"))?;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let solved = chol.solve(&lin);
    Ok(0.5 * lin.dot(&solved) - 0.5 * log_det)
}

pub(super) fn to_mean(n: usize, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let (mean, cov) = moments(n, theta.as_slice())?;
    let second = &cov + &mean * mean.transpose();
    Ok(pack_moments(&mean, &second))
}

pub(super) fn to_natural(n: usize, eta: &DVector<f64>) -> Result<DVector<f64>> {
    let (mean, second) = unpack_moments(n, eta.as_slice());
    let cov = second - &mean * mean.transpose();
    let precision = cov
        .cholesky()
        .ok_or_else(|| domain("normal covariance from mean parameters is not positive definite"))?
        .inverse();
    Ok(pack(&(&precision * mean), &(precision * -0.5)))
}

pub(super) fn sample<R: Rng + ?Sized>(n: usize, theta: &DVector<f64>, rng: &mut R, count: usize) -> Result<Vec<Observation>> {
    let (mean, cov) = moments(n, theta.as_slice())?;
    let l = cov.cholesky().ok_or_else(|| domain("covariance is not positive definite"))?.l();
    Ok((0..count)
        .map(|_| {
            let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &mean + &l * eps;
            Observation::new(x.as_slice().to_vec())
        })
        .collect())
}

/// Clips eigenvalues of the second-order block to at most `-1e-6`.
pub(super) fn project(n: usize, theta: &mut DVector<f64>) -> bool {
    let (lin, sym) = unpack(n, theta.as_slice());
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v <= -1e-6) {
        return false;
    }
    let clipped = eig.eigenvalues.map(|v| v.min(-1e-6));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    *theta = pack(&lin, &rebuilt);
    true
}
