//! Parameter estimation as a harmonium: the latent variable is the natural
//! parameter of a Poisson rate, with its conjugate prior.

use harmonium::conjugation::bayes_estimation_harmonium;
use harmonium::experiments::{grid, trapezoid};
use harmonium::inference::{recursive_update_shared, ConjugatedLikelihood};
use harmonium::{Family, Observation, Result};
use nalgebra::dvector;

fn main() -> Result<()> {
    let (h, c) = bayes_estimation_harmonium(Family::PoissonProduct { neurons: 1 })?;
    let lik = ConjugatedLikelihood::from_harmonium(&h, &c)?;
    // Gamma(2, 1) prior on the rate, in coordinates (theta, exp(theta))
    let prior = dvector![2.0, -1.0];
    let counts: Vec<Observation> = [3, 5, 4, 6, 2, 4].map(|n| Observation::counts(&[n])).to_vec();
    let post = recursive_update_shared(&prior, &lik, &counts)?;
    println!("posterior natural parameters {:?}", post.as_slice());

    let thetas = grid(-4.0, 4.0, 4001);
    let step = thetas[1] - thetas[0];
    let dens: Vec<f64> = thetas.iter().map(|&t| h.lat().unnormalized_log_density(&post, &[t]).map(f64::exp)).collect::<Result<_>>()?;
    let z = trapezoid(&dens, step);
    let rate: Vec<f64> = thetas.iter().zip(&dens).map(|(t, d)| t.exp() * d / z).collect();
    // a Gamma(a, b) posterior on the rate has mean a / b
    println!("posterior mean rate {:.4} (closed form {:.4})", trapezoid(&rate, step), post[0] / -post[1]);
    Ok(())
}
