//! Eight Poisson neurons with von Mises tuning: fitted conjugation and
//! stimulus decoding against brute-force Bayes on a grid.

use harmonium::experiments::{circle_grid, population_trials, total_variation, PopulationCode};
use harmonium::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let code = PopulationCode::new(8)?;
    println!("chi = {:.4}, rho = {:.3?}", code.conjugation.chi, code.conjugation.rho.as_slice());
    println!("fit residual {:.3e} ({:.3e} of chi)", code.residual, code.residual / code.conjugation.chi);
    let angles = circle_grid(1001);
    let step = angles[1] - angles[0];
    for (stimulus, counts) in population_trials(&code, 5, &mut ChaCha8Rng::seed_from_u64(11))? {
        let decoded = code.decoded_posterior(&counts, &angles)?;
        let exact = code.grid_posterior(&counts, &angles)?;
        let peak = angles[decoded.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
        println!(
            "stimulus {:.3}  counts {:?}  posterior mode {:.3}  TV to grid Bayes {:.2e}",
            stimulus[0],
            counts.iter().map(|&n| n as u64).collect::<Vec<_>>(),
            peak,
            total_variation(&decoded, &exact, step)
        );
    }
    Ok(())
}
