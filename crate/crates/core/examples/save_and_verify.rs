//! Writes a model to JSON, reads it back and checks its conjugation.

use harmonium::conjugation::{exact_conjugation, probes, verify_conjugation};
use harmonium::experiments::vonmises_ground_truth;
use harmonium::{Harmonium, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let (h, _) = vonmises_ground_truth()?;
    let json = serde_json::to_string_pretty(&h)?;
    println!("{json}");
    let back: Harmonium = serde_json::from_str(&json)?;
    let c = exact_conjugation(&back)?;
    let pts = probes(back.lat(), 3, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("identical after round trip: {}", back == h);
    println!("conjugation residual {:.2e}", verify_conjugation(&back, &c, &pts)?);
    Ok(())
}
