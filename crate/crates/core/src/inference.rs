//! Bayesian updating with conjugated likelihoods.
//!
//! For a likelihood `q(x | z)` with interactions `Theta_XZ` and conjugation
//! vector `rho`, a prior in the latent family with natural parameters
//! `theta*` has posterior `theta* + s_X(x) Theta_XZ - rho`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::exfam::{Family, Observation};
use crate::harmonium::{Conjugation, Harmonium};

/// The parts of a conjugated harmonium needed to update a prior.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugatedLikelihood {
    pub obs: Family,
    pub interaction: DMatrix<f64>,
    pub rho: DVector<f64>,
}

impl ConjugatedLikelihood {
    pub fn new(obs: Family, interaction: DMatrix<f64>, rho: DVector<f64>) -> Result<Self> {
        check_len(obs.dimension(), interaction.nrows())?;
        check_len(interaction.ncols(), rho.len())?;
        Ok(ConjugatedLikelihood { obs, interaction, rho })
    }

    pub fn from_harmonium(h: &Harmonium, c: &Conjugation) -> Result<Self> {
        Self::new(h.obs().clone(), h.interaction().clone(), c.rho.clone())
    }

    /// The increment `s_X(x) Theta_XZ - rho` this observation adds to a prior.
    pub fn increment(&self, x: &[f64]) -> Result<DVector<f64>> {
        let s = self.obs.sufficient_statistic(x)?;
        Ok(self.interaction.tr_mul(&s) - &self.rho)
    }
}

/// Posterior natural parameters after one observation.
pub fn bayes_update(prior: &DVector<f64>, likelihood: &ConjugatedLikelihood, x: &[f64]) -> Result<DVector<f64>> {
    check_len(likelihood.rho.len(), prior.len())?;
    Ok(prior + likelihood.increment(x)?)
}

/// Posterior natural parameters after independent observations `xs[i]`, each
/// with its own likelihood `likelihoods[i]` over the same latent.
pub fn recursive_update(
    prior: &DVector<f64>,
    likelihoods: &[ConjugatedLikelihood],
    xs: &[Observation],
) -> Result<DVector<f64>> {
    if likelihoods.len() != xs.len() {
        return Err(Error::Shape { expected: likelihoods.len(), got: xs.len() });
    }
    likelihoods.iter().zip(xs).try_fold(prior.clone(), |post, (lik, x)| bayes_update(&post, lik, x))
}

/// [`recursive_update`] with one likelihood shared by every observation.
pub fn recursive_update_shared(
    prior: &DVector<f64>,
    likelihood: &ConjugatedLikelihood,
    xs: &[Observation],
) -> Result<DVector<f64>> {
    xs.iter().try_fold(prior.clone(), |post, x| bayes_update(&post, likelihood, x))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::conjugation::{dirichlet_categorical_harmonium, lgm_from_moments};
    use crate::exfam::normal;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn dirichlet_likelihood() -> ConjugatedLikelihood {
        let (h, c) = dirichlet_categorical_harmonium(2, v(&[1.0, 1.0, 1.0])).unwrap();
        ConjugatedLikelihood::from_harmonium(&h, &c).unwrap()
    }

    #[test]
    fn uninformative_likelihood_keeps_prior() {
        let lik = ConjugatedLikelihood::new(Family::Categorical { states: 2 }, DMatrix::zeros(2, 3), DVector::zeros(3))
            .unwrap();
        let prior = v(&[0.5, 1.0, -0.2]);
        assert_eq!(bayes_update(&prior, &lik, &[1.0]).unwrap(), prior);
    }

    #[test]
    fn dirichlet_counts_increment() {
        let lik = dirichlet_likelihood();
        // alpha = (1, 1, 1)
        let prior = DVector::zeros(3);
        assert_eq!(bayes_update(&prior, &lik, &[2.0]).unwrap(), v(&[0.0, 0.0, 1.0]));
        assert_eq!(bayes_update(&prior, &lik, &[0.0]).unwrap(), v(&[1.0, 0.0, 0.0]));
        let xs: Vec<Observation> = [1, 2, 2].map(Observation::index).to_vec();
        assert_eq!(recursive_update_shared(&prior, &lik, &xs).unwrap(), v(&[0.0, 1.0, 2.0]));
        assert_eq!(recursive_update_shared(&prior, &lik, &[]).unwrap(), prior);
    }

    #[test]
    fn order_of_observations_does_not_matter() {
        let lik = dirichlet_likelihood();
        let prior = v(&[0.3, 0.1, 2.0]);
        let xs: Vec<Observation> = [0, 1, 2, 2, 1, 0, 0].map(Observation::index).to_vec();
        let mut rev = xs.clone();
        rev.reverse();
        let a = recursive_update_shared(&prior, &lik, &xs).unwrap();
        let b = recursive_update_shared(&prior, &lik, &rev).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let lik = dirichlet_likelihood();
        let err = recursive_update(&DVector::zeros(3), &[lik.clone(), lik], &[Observation::index(0)]);
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn gaussian_posterior_mean_and_variance() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero = DVector::zeros(1);
        let (h, c) = lgm_from_moments(&zero, &one, &one, &zero, &one).unwrap();
        let lik = ConjugatedLikelihood::from_harmonium(&h, &c).unwrap();
        let post = bayes_update(&h.prior_params(&c).unwrap(), &lik, &[1.0]).unwrap();
        let (mean, cov) = normal::moments(1, post.as_slice()).unwrap();
        assert_relative_eq!(mean[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(cov[(0, 0)], 0.5, epsilon = 1e-14);
    }
}
