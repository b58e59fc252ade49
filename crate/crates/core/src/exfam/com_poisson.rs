//! Conway-Maxwell-Poisson counts. Per coordinate the statistic is
//! `(n, log n!)` with natural parameters `(log lambda, -nu)`, so the pmf is
//! proportional to `lambda^n / (n!)^nu`. The normalizer is a series, summed
//! until the term ratio or the geometric tail bound is negligible.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{newton_backward, Observation};
use crate::error::{domain, Error, Result};
use crate::special::{ln_factorial, log_sum_exp};

const MAX_TERMS: usize = 10_000;
/// Largest allowed shape coordinate, i.e. smallest dispersion `nu`.
const MAX_SHAPE: f64 = -0.2;
/// Largest count mode kept by [`project`], so the series stays within `MAX_TERMS`.
const MAX_MODE: f64 = 1000.0;

pub(super) fn validate_natural(theta: &[f64]) -> Result<()> {
    if theta.chunks_exact(2).all(|p| p[1] < 0.0) {
        Ok(())
    } else {
        Err(domain("CoM-Poisson shape coordinate (-nu) must be negative"))
    }
}

pub(super) fn statistic(x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(2 * x.len(), x.iter().flat_map(|&n| [n, ln_factorial(n)]))
}

/// Log-weights `n log_lambda + shape log n!` of the truncated support.
fn log_terms(loc: f64, shape: f64) -> Result<Vec<f64>> {
    let mut terms: Vec<f64> = Vec::with_capacity(64);
    let mut log_total = f64::NEG_INFINITY;
    let mut lf = 0.0;
    for n in 0..MAX_TERMS {
        if n > 0 {
            lf += (n as f64).ln();
        }
        let t = loc * n as f64 + shape * lf;
        terms.push(t);
        log_total = log_sum_exp([log_total, t]);
        let log_ratio = loc + shape * ((n + 1) as f64).ln();
        if log_ratio < 0.0 {
            let ratio = log_ratio.exp();
            let log_tail = t + log_ratio - (-ratio).ln_1p();
            if ratio < 1e-16 || log_tail - log_total < (1e-14f64).ln() {
                return Ok(terms);
            }
        }
    }
    Err(Error::NoConvergence { what: "CoM-Poisson normalizing series", iterations: MAX_TERMS })
}

struct Series {
    log_z: f64,
    probs: Vec<f64>,
}

fn series(loc: f64, shape: f64) -> Result<Series> {
    let terms = log_terms(loc, shape)?;
    let log_z = log_sum_exp(terms.iter().copied());
    let probs = terms.iter().map(|t| (t - log_z).exp()).collect();
    Ok(Series { log_z, probs })
}

fn pair_moments(s: &Series) -> (DVector<f64>, DMatrix<f64>) {
    let mut mean = DVector::zeros(2);
    let mut second = DMatrix::zeros(2, 2);
    let mut lf = 0.0;
    for (n, p) in s.probs.iter().enumerate() {
        if n > 0 {
            lf += (n as f64).ln();
        }
        let v = DVector::from_vec(vec![n as f64, lf]);
        mean.axpy(*p, &v, 1.0);
        second.ger(*p, &v, &v, 1.0);
    }
    let cov = second - &mean * mean.transpose();
    (mean, cov)
}

pub(super) fn log_partition(theta: &DVector<f64>) -> Result<f64> {
    theta.as_slice().chunks_exact(2).map(|p| Ok(series(p[0], p[1])?.log_z)).sum()
}

pub(super) fn to_mean(theta: &DVector<f64>) -> Result<DVector<f64>> {
    let mut eta = DVector::zeros(theta.len());
    for (j, p) in theta.as_slice().chunks_exact(2).enumerate() {
        let (m, _) = pair_moments(&series(p[0], p[1])?);
        eta[2 * j] = m[0];
        eta[2 * j + 1] = m[1];
    }
    Ok(eta)
}

/// Mean and variance of the counts in each coordinate.
pub fn count_moments(theta: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
    validate_natural(theta.as_slice())?;
    theta
        .as_slice()
        .chunks_exact(2)
        .map(|p| {
            let (m, c) = pair_moments(&series(p[0], p[1])?);
            Ok((m[0], c[(0, 0)]))
        })
        .collect()
}

/// Lower convex envelope of `(n, log n!)` at real `x >= 0`.
fn log_factorial_envelope(x: f64) -> f64 {
    let lo = x.floor();
    let frac = x - lo;
    (1.0 - frac) * ln_factorial(lo) + frac * ln_factorial(lo + 1.0)
}

pub(super) fn to_natural(eta: &DVector<f64>) -> Result<DVector<f64>> {
    let mut theta = DVector::zeros(eta.len());
    for (j, p) in eta.as_slice().chunks_exact(2).enumerate() {
        let (mean_n, mean_lf) = (p[0], p[1]);
        if !(mean_n > 0.0 && mean_lf > log_factorial_envelope(mean_n)) {
            return Err(domain("CoM-Poisson mean parameters outside the mean domain"));
        }
        let target = DVector::from_vec(vec![mean_n, mean_lf]);
        let init = DVector::from_vec(vec![mean_n.ln(), -1.0]);
        let solved = newton_backward(
            "CoM-Poisson backward mapping",
            &target,
            init,
            |t| {
                if t[1] >= 0.0 {
                    return None;
                }
                let s = series(t[0], t[1]).ok()?;
                let (m, c) = pair_moments(&s);
                Some((s.log_z, m, c))
            },
            1e-11,
            500,
        )?;
        theta[2 * j] = solved[0];
        theta[2 * j + 1] = solved[1];
    }
    Ok(theta)
}

pub(super) fn sample<R: Rng + ?Sized>(theta: &DVector<f64>, rng: &mut R, count: usize) -> Result<Vec<Observation>> {
    let cdfs = theta
        .as_slice()
        .chunks_exact(2)
        .map(|p| {
            let s = series(p[0], p[1])?;
            let mut acc = 0.0;
            Ok(s.probs
                .iter()
                .map(|q| {
                    acc += q;
                    acc
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..count)
        .map(|_| {
            Observation::new(
                cdfs.iter()
                    .map(|cdf| {
                        let u = rng.random::<f64>() * cdf[cdf.len() - 1];
                        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as f64
                    })
                    .collect(),
            )
        })
        .collect())
}

pub(super) fn project(theta: &mut DVector<f64>) -> bool {
    let mut changed = false;
    for j in 0..theta.len() / 2 {
        if theta[2 * j + 1] > MAX_SHAPE {
            theta[2 * j + 1] = MAX_SHAPE;
            changed = true;
        }
        let max_loc = -theta[2 * j + 1] * MAX_MODE.ln();
        if theta[2 * j] > max_loc {
            theta[2 * j] = max_loc;
            changed = true;
        }
    }
    changed
}
