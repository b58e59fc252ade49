use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::Observation;
use crate::error::{domain, Result};

pub(super) fn sample<R: Rng + ?Sized>(theta: &DVector<f64>, rng: &mut R, count: usize) -> Result<Vec<Observation>> {
    let laws = theta
        .iter()
        .map(|t| Poisson::new(t.exp()).map_err(|e| domain(format!("Poisson rate {}: {e}", t.exp()))))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..count)
        .map(|_| Observation::new(laws.iter().map(|p| p.sample(rng)).collect()))
        .collect())
}
