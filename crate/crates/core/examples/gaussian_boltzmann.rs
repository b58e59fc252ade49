//! Trains a Gaussian-Boltzmann harmonium on two noisy circles and compares
//! its held-out cross-entropy with a single normal.

use harmonium::experiments::{gaussian_mle_cross_entropy, train_gaussian_boltzmann, two_circles};
use harmonium::learning::cross_entropy;
use harmonium::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let train = two_circles(200, &mut ChaCha8Rng::seed_from_u64(1));
    let test = two_circles(200, &mut ChaCha8Rng::seed_from_u64(2));
    let trace = train_gaussian_boltzmann(&train, 6, epochs, 42)?;
    let model = cross_entropy(&trace.model, &trace.conjugation, &test)?;
    let single = gaussian_mle_cross_entropy(&train, &test)?;
    println!("held-out cross-entropy: harmonium {model:.4}, single normal {single:.4}, gain {:.4}", single - model);
    Ok(())
}
