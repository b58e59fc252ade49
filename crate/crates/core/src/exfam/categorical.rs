use nalgebra::DVector;
use rand::Rng;

use super::Observation;
use crate::error::{domain, Result};
use crate::special::log_sum_exp;

pub(super) fn validate(states: usize, x: &[f64]) -> Result<()> {
    let k = x[0];
    if k >= 0.0 && k.fract() == 0.0 && k <= states as f64 {
        Ok(())
    } else {
        Err(domain(format!("categorical index {k} outside 0..={states}")))
    }
}

pub(super) fn statistic(states: usize, x: &[f64]) -> DVector<f64> {
    let mut s = DVector::zeros(states);
    let k = x[0] as usize;
    if k > 0 {
        s[k - 1] = 1.0;
    }
    s
}

pub(super) fn log_partition(theta: &DVector<f64>) -> f64 {
    log_sum_exp(std::iter::once(0.0).chain(theta.iter().copied()))
}

pub(super) fn to_mean(theta: &DVector<f64>) -> DVector<f64> {
    let psi = log_partition(theta);
    theta.map(|t| (t - psi).exp())
}

pub(super) fn to_natural(eta: &DVector<f64>) -> Result<DVector<f64>> {
    let rest = 1.0 - eta.sum();
    if eta.iter().any(|&e| e <= 0.0) || rest <= 0.0 {
        return Err(domain("categorical mean parameters must be positive with sum below 1"));
    }
    let log_rest = rest.ln();
    Ok(eta.map(|e| e.ln() - log_rest))
}

/// Probabilities of states `0..=k`.
pub fn weights(theta: &DVector<f64>) -> Vec<f64> {
    let eta = to_mean(theta);
    let mut w = Vec::with_capacity(eta.len() + 1);
    w.push((-log_partition(theta)).exp());
    w.extend(eta.iter());
    w
}

pub(super) fn sample<R: Rng + ?Sized>(theta: &DVector<f64>, rng: &mut R, count: usize) -> Vec<Observation> {
    let w = weights(theta);
    (0..count).map(|_| Observation::index(inverse_cdf(&w, rng.random::<f64>()))).collect()
}

pub(crate) fn inverse_cdf(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return k;
        }
    }
    weights.len() - 1
}
