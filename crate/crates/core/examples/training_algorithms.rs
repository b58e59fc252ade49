//! Fits a von Mises mixture with the four gradient algorithms and prints
//! their cross-entropy traces.

use harmonium::experiments::vonmises_training;
use harmonium::Result;

fn main() -> Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let run = vonmises_training(42, epochs, 3)?;
    println!("ground-truth cross-entropy {:.4}", run.ground_truth_cross_entropy);
    for (alg, trace) in &run.runs {
        let ce = &trace.cross_entropy;
        let marks: Vec<String> =
            [0, ce.len() / 10, ce.len() / 4, ce.len() / 2, ce.len() - 1].iter().map(|&i| format!("{:.3}", ce[i])).collect();
        println!("{alg:>8}: {}", marks.join(" -> "));
    }
    Ok(())
}
