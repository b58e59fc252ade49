//! Dirichlet family in the parameterization `theta_i = alpha_i - 1`, with
//! statistic `log z_i` over all `d + 1` weights and Lebesgue base measure on
//! the first `d` coordinates of the simplex.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::Observation;
use crate::error::{domain, Error, Result};
use crate::special::{digamma, ln_gamma, log_sum_exp, trigamma};

pub(super) fn validate(x: &[f64]) -> Result<()> {
    let sum: f64 = x.iter().sum();
    if x.iter().all(|&z| z > 0.0) && (sum - 1.0).abs() < 1e-9 {
        Ok(())
    } else {
        Err(domain("Dirichlet observation must be positive weights summing to 1"))
    }
}

pub(super) fn log_partition(theta: &DVector<f64>) -> f64 {
    let total: f64 = theta.iter().map(|t| t + 1.0).sum();
    theta.iter().map(|t| ln_gamma(t + 1.0)).sum::<f64>() - ln_gamma(total)
}

pub(super) fn to_mean(theta: &DVector<f64>) -> DVector<f64> {
    let total: f64 = theta.iter().map(|t| t + 1.0).sum();
    let dg = digamma(total);
    theta.map(|t| digamma(t + 1.0) - dg)
}

pub(super) fn to_natural(eta: &DVector<f64>) -> Result<DVector<f64>> {
    if eta.iter().any(|&e| e >= 0.0) {
        return Err(domain("Dirichlet mean log-weights must be negative"));
    }
    if log_sum_exp(eta.iter().copied()) >= 0.0 {
        return Err(domain("Dirichlet mean log-weights violate Jensen's bound"));
    }
    // Concave maximization of sum (alpha_i - 1) eta_i - psi(alpha) by Newton
    // steps with the diagonal-plus-rank-one Hessian.
    let objective = |alpha: &DVector<f64>| -> f64 {
        let total = alpha.sum();
        alpha.iter().zip(eta.iter()).map(|(a, e)| (a - 1.0) * e - ln_gamma(*a)).sum::<f64>() + ln_gamma(total)
    };
    let norm = log_sum_exp(eta.iter().copied());
    let mut alpha = eta.map(|e| (e - norm).exp() * (eta.len() as f64));
    let mut value = objective(&alpha);
    for _ in 0..500 {
        let total = alpha.sum();
        let dg = digamma(total);
        let grad = DVector::from_fn(alpha.len(), |i, _| eta[i] - digamma(alpha[i]) + dg);
        if grad.amax() < 1e-12 {
            return Ok(alpha.map(|a| a - 1.0));
        }
        let q = alpha.map(|a| -trigamma(a));
        let z = trigamma(total);
        let b = grad.iter().zip(q.iter()).map(|(g, q)| g / q).sum::<f64>()
            / (1.0 / z + q.iter().map(|q| 1.0 / q).sum::<f64>());
        let step = DVector::from_fn(alpha.len(), |i, _| (grad[i] - b) / q[i]);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let candidate = &alpha - &step * t;
            if candidate.iter().all(|&a| a > 0.0) {
                let v = objective(&candidate);
                if v >= value - 1e-14 * value.abs().max(1.0) {
                    alpha = candidate;
                    value = v;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(Error::NoConvergence { what: "Dirichlet backward mapping", iterations: 500 })
}

pub(super) fn sample<R: Rng + ?Sized>(theta: &DVector<f64>, rng: &mut R, count: usize) -> Result<Vec<Observation>> {
    // Gamma draws in log space: for alpha < 1 use G(alpha) = G(alpha + 1) U^(1/alpha).
    let laws = theta
        .iter()
        .map(|t| {
            let a = t + 1.0;
            let shape = if a < 1.0 { a + 1.0 } else { a };
            Gamma::new(shape, 1.0).map(|g| (a, g)).map_err(|e| domain(format!("gamma shape {a}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..count)
        .map(|_| {
            let logs: Vec<f64> = laws
                .iter()
                .map(|(a, g)| {
                    let lg = g.sample(rng).ln();
                    if *a < 1.0 {
                        lg + rng.random::<f64>().ln() / a
                    } else {
                        lg
                    }
                })
                .collect();
            let norm = log_sum_exp(logs.iter().copied());
            let mut w: Vec<f64> = logs.iter().map(|l| (l - norm).exp().max(f64::MIN_POSITIVE)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            Observation::new(w)
        })
        .collect())
}
