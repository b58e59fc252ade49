//! Runs every scenario and writes its data files under a directory.

use harmonium::experiments::{run_scenario, Scenario, ScenarioConfig};
use harmonium::Result;

fn main() -> Result<()> {
    let root = std::env::args().nth(1).unwrap_or_else(|| "out".into());
    for scenario in Scenario::ALL {
        let report = run_scenario(&ScenarioConfig::new(scenario, format!("{root}/{scenario}")))?;
        println!("{scenario}: {} files", report.files.len());
        for (k, v) in &report.metrics {
            println!("  {k} = {v:.6}");
        }
    }
    Ok(())
}
