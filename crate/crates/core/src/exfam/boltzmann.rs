//! Fully connected Boltzmann machines, computed by exhaustive enumeration.
//!
//! The statistic is `z` followed by `z_i z_j` for `i < j`; the diagonal
//! `z_i^2 = z_i` is left out to keep the statistic minimal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{newton_backward, Observation};
use crate::error::{domain, Error, Result};
use crate::special::log_sum_exp;

/// About a million states.
pub const MAX_NEURONS: usize = 20;

pub(super) fn check_budget(neurons: usize) -> Result<()> {
    if neurons > MAX_NEURONS {
        Err(Error::Budget { neurons, max: MAX_NEURONS })
    } else {
        Ok(())
    }
}

/// Index of the pair `(i, j)`, `i < j`, within the pairwise block.
pub(crate) fn pair_index(m: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < m);
    i * m - i * (i + 1) / 2 + (j - i - 1)
}

pub(super) fn validate(x: &[f64]) -> Result<()> {
    if x.iter().all(|&z| z == 0.0 || z == 1.0) {
        Ok(())
    } else {
        Err(domain("Boltzmann states must be binary"))
    }
}

pub(super) fn statistic(m: usize, x: &[f64]) -> DVector<f64> {
    let mut s = DVector::zeros(m + m * (m.saturating_sub(1)) / 2);
    s.rows_mut(0, m).copy_from_slice(x);
    for i in 0..m {
        for j in i + 1..m {
            s[m + pair_index(m, i, j)] = x[i] * x[j];
        }
    }
    s
}

pub(crate) fn states(m: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1usize << m).map(move |bits| (0..m).map(|i| ((bits >> i) & 1) as f64).collect())
}

fn energy(m: usize, theta: &[f64], bits: usize) -> f64 {
    let mut e = 0.0;
    for i in 0..m {
        if (bits >> i) & 1 == 1 {
            e += theta[i];
            for j in i + 1..m {
                if (bits >> j) & 1 == 1 {
                    e += theta[m + pair_index(m, i, j)];
                }
            }
        }
    }
    e
}

fn energies(m: usize, theta: &[f64]) -> Vec<f64> {
    (0..1usize << m).map(|bits| energy(m, theta, bits)).collect()
}

pub(super) fn log_partition(m: usize, theta: &DVector<f64>) -> f64 {
    log_sum_exp(energies(m, theta.as_slice()))
}

/// Log-partition, mean parameters, and covariance of the statistic.
fn moments(m: usize, theta: &DVector<f64>, with_cov: bool) -> (f64, DVector<f64>, DMatrix<f64>) {
    let e = energies(m, theta.as_slice());
    let psi = log_sum_exp(e.iter().copied());
    let d = theta.len();
    let mut mean = DVector::zeros(d);
    let mut second = if with_cov { DMatrix::zeros(d, d) } else { DMatrix::zeros(0, 0) };
    for (bits, en) in e.iter().enumerate() {
        let p = (en - psi).exp();
        if p == 0.0 {
            continue;
        }
        let x: Vec<f64> = (0..m).map(|i| ((bits >> i) & 1) as f64).collect();
        let s = statistic(m, &x);
        mean.axpy(p, &s, 1.0);
        if with_cov {
            second.ger(p, &s, &s, 1.0);
        }
    }
    let cov = if with_cov { second - &mean * mean.transpose() } else { second };
    (psi, mean, cov)
}

pub(super) fn to_mean(m: usize, theta: &DVector<f64>) -> DVector<f64> {
    moments(m, theta, false).1
}

pub(super) fn to_natural(m: usize, eta: &DVector<f64>) -> Result<DVector<f64>> {
    for i in 0..m {
        if !(eta[i] > 0.0 && eta[i] < 1.0) {
            return Err(domain("Boltzmann firing probabilities must lie in (0, 1)"));
        }
        for j in i + 1..m {
            let p = eta[m + pair_index(m, i, j)];
            if !(p > 0.0 && p < eta[i].min(eta[j]) && p > eta[i] + eta[j] - 1.0) {
                return Err(domain("Boltzmann pairwise moments outside the marginal polytope"));
            }
        }
    }
    newton_backward(
        "Boltzmann backward mapping",
        eta,
        DVector::zeros(eta.len()),
        |t| {
            let (psi, mean, cov) = moments(m, t, true);
            psi.is_finite().then_some((psi, mean, cov))
        },
        1e-12,
        500,
    )
}

pub(super) fn sample<R: Rng + ?Sized>(m: usize, theta: &DVector<f64>, rng: &mut R, count: usize) -> Vec<Observation> {
    let e = energies(m, theta.as_slice());
    let psi = log_sum_exp(e.iter().copied());
    let mut cdf = Vec::with_capacity(e.len());
    let mut acc = 0.0;
    for en in &e {
        acc += (en - psi).exp();
        cdf.push(acc);
    }
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let bits = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            Observation::new((0..m).map(|i| ((bits >> i) & 1) as f64).collect())
        })
        .collect()
}
