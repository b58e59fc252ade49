//! Moves between natural and mean coordinates and draws samples for each family.

use harmonium::{Family, Result};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let families = [
        Family::Categorical { states: 2 },
        Family::PoissonProduct { neurons: 2 },
        Family::MultivariateNormal { dim: 2 },
        Family::VonMisesProduct { dim: 1 },
        Family::Dirichlet { dim: 2 },
        Family::Boltzmann { neurons: 3 },
        Family::CoMPoissonProduct { dim: 1 },
    ];
    for fam in families {
        let theta = fam.random_natural(&mut rng, 0.7);
        let eta = fam.to_mean(&theta)?;
        let back = fam.to_natural(&eta)?;
        let draws = fam.sample(&theta, &mut rng, 5000)?;
        let mut empirical = DVector::zeros(fam.dimension());
        for x in &draws {
            empirical += fam.sufficient_statistic(x)?;
        }
        empirical /= draws.len() as f64;
        println!("{fam:?}");
        println!("  psi(theta)        = {:.6}", fam.log_partition(&theta)?);
        println!("  eta               = {:.4?}", eta.as_slice());
        println!("  sample mean of s  = {:.4?}", empirical.as_slice());
        println!("  round-trip error  = {:.2e}", (back - &theta).amax());
    }
    Ok(())
}
