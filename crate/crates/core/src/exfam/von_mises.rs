use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use rand::Rng;

use super::Observation;
use crate::error::{domain, Error, Result};
use crate::special::{bessel_ratio, bessel_ratio_over_arg, log_i0};

const MAX_CONCENTRATION: f64 = 500.0;

pub(super) fn validate(x: &[f64]) -> Result<()> {
    if x.iter().all(|&z| (0.0..=TAU).contains(&z)) {
        Ok(())
    } else {
        Err(domain("angles must lie in [0, 2pi)"))
    }
}

pub(super) fn statistic(x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(2 * x.len(), x.iter().flat_map(|z| [z.cos(), z.sin()]))
}

fn pairs(theta: &DVector<f64>) -> impl Iterator<Item = (f64, f64)> + '_ {
    theta.as_slice().chunks_exact(2).map(|p| (p[0], p[1]))
}

pub(super) fn log_partition(theta: &DVector<f64>) -> f64 {
    pairs(theta).map(|(c, s)| log_i0(c.hypot(s))).sum()
}

pub(super) fn to_mean(theta: &DVector<f64>) -> DVector<f64> {
    let mut eta = DVector::zeros(theta.len());
    for (j, (c, s)) in pairs(theta).enumerate() {
        let scale = bessel_ratio_over_arg(c.hypot(s));
        eta[2 * j] = scale * c;
        eta[2 * j + 1] = scale * s;
    }
    eta
}

/// Solves `I1(k) / I0(k) = r` for the concentration `k`.
pub(crate) fn invert_ratio(r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Ok(0.0);
    }
    if r >= bessel_ratio(MAX_CONCENTRATION) {
        return Err(domain(format!("mean resultant length {r} needs concentration above {MAX_CONCENTRATION}")));
    }
    let (mut lo, mut hi) = (0.0, MAX_CONCENTRATION);
    let mut k = (r * (2.0 - r * r) / (1.0 - r * r)).clamp(lo, hi);
    for _ in 0..200 {
        let a = bessel_ratio(k);
        let f = a - r;
        if f.abs() < 1e-15 {
            return Ok(k);
        }
        if f > 0.0 {
            hi = k;
        } else {
            lo = k;
        }
        let slope = if k > 0.0 { 1.0 - a / k - a * a } else { 0.5 };
        let mut next = k - f / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - k).abs() <= 1e-15 * k.max(1.0) {
            return Ok(next);
        }
        k = next;
    }
    Err(Error::NoConvergence { what: "von Mises concentration", iterations: 200 })
}

pub(super) fn to_natural(eta: &DVector<f64>) -> Result<DVector<f64>> {
    let mut theta = DVector::zeros(eta.len());
    for (j, (c, s)) in pairs(eta).enumerate() {
        let r = c.hypot(s);
        if r >= 1.0 {
            return Err(domain("von Mises mean resultant length must be below 1"));
        }
        if r == 0.0 {
            continue;
        }
        let k = invert_ratio(r)?;
        theta[2 * j] = k * c / r;
        theta[2 * j + 1] = k * s / r;
    }
    Ok(theta)
}

/// Best-Fisher rejection sampler for one von Mises angle.
pub(crate) fn sample_angle<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> f64 {
    if kappa < 1e-8 {
        return rng.random::<f64>() * TAU;
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let offset = f.clamp(-1.0, 1.0).acos();
            let angle = if u3 > 0.5 { mu + offset } else { mu - offset };
            let wrapped = angle.rem_euclid(TAU);
            return if wrapped >= TAU { 0.0 } else { wrapped };
        }
    }
}

pub(super) fn sample<R: Rng + ?Sized>(theta: &DVector<f64>, rng: &mut R, count: usize) -> Vec<Observation> {
    let params: Vec<(f64, f64)> = pairs(theta).map(|(c, s)| (s.atan2(c), c.hypot(s))).collect();
    (0..count)
        .map(|_| Observation::new(params.iter().map(|&(mu, k)| sample_angle(mu, k, rng)).collect()))
        .collect()
}
