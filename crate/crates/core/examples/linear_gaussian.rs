//! Conjugation of normal observables with normal and Boltzmann latents.

use harmonium::conjugation::{exact_conjugation, lgm_from_moments, probes, verify_conjugation};
use harmonium::exfam::normal_moments;
use harmonium::inference::{bayes_update, ConjugatedLikelihood};
use harmonium::{Family, Harmonium, Result};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // factor analysis: two observed coordinates driven by one factor
    let (h, c) = lgm_from_moments(
        &dvector![1.0, -1.0],
        &dmatrix![0.3, 0.0; 0.0, 0.5],
        &dmatrix![1.0; 0.5],
        &dvector![0.0],
        &dmatrix![1.0],
    )?;
    let lik = ConjugatedLikelihood::from_harmonium(&h, &c)?;
    let post = bayes_update(&h.prior_params(&c)?, &lik, &[2.0, -0.5])?;
    let (mean, cov) = normal_moments(1, post.as_slice())?;
    println!("factor posterior given x = (2, -0.5): mean {:.4}, variance {:.4}", mean[0], cov[(0, 0)]);
    let pts = probes(h.lat(), 100, &mut rng)?;
    println!("conjugation residual {:.2e}", verify_conjugation(&h, &c, &pts)?);

    // Gaussian-Boltzmann: only the block pairing x with z may be non-zero
    let obs = Family::MultivariateNormal { dim: 2 };
    let lat = Family::Boltzmann { neurons: 3 };
    let mut interaction = DMatrix::zeros(obs.dimension(), lat.dimension());
    interaction.view_mut((0, 0), (2, 3)).copy_from(&dmatrix![1.0, -0.5, 0.2; 0.0, 0.8, -1.0]);
    let gb = Harmonium::new(obs.clone(), lat.clone(), obs.random_natural(&mut rng, 1.0), DVector::zeros(6), interaction)?;
    let gc = exact_conjugation(&gb)?;
    let pts = probes(gb.lat(), 8, &mut rng)?;
    println!("Gaussian-Boltzmann rho = {:.4?}", gc.rho.as_slice());
    println!("Gaussian-Boltzmann residual {:.2e}", verify_conjugation(&gb, &gc, &pts)?);
    Ok(())
}
