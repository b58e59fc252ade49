//! Recursive Bayesian inference of categorical weights under a Dirichlet prior.

use harmonium::experiments::{dirichlet_mean, dirichlet_model, dirichlet_observations, dirichlet_posterior};
use harmonium::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let (h, c) = dirichlet_model()?;
    let data = dirichlet_observations(100, &mut ChaCha8Rng::seed_from_u64(5))?;
    for n in [0, 10, 20, 30, 60, 100] {
        let post = dirichlet_posterior(&h, &c, &data, n)?;
        let alpha = post.map(|t| t + 1.0);
        println!("n = {n:3}  alpha = {:.0?}  mean = {:.3?}", alpha.as_slice(), dirichlet_mean(&post).as_slice());
    }
    Ok(())
}
