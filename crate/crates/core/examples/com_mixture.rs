//! EM-GD on a CoM-Poisson mixture restricted to location interactions,
//! comparing model and sample Fano factors.

use harmonium::experiments::com_training;
use harmonium::Result;

fn main() -> Result<()> {
    let run = com_training(42, 1000, 3)?;
    println!("final cross-entropy {:.4}", run.trace.final_cross_entropy());
    println!("coordinate  sample FF  model FF");
    for (j, (s, m)) in run.sample_fano.iter().zip(&run.model_fano).enumerate() {
        println!("{j:10}  {s:9.3}  {m:8.3}");
    }
    Ok(())
}
