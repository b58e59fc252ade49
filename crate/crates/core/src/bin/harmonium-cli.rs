use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harmonium::conjugation::{exact_conjugation, fit_conjugation, probes, verify_conjugation};
use harmonium::experiments::{run_scenario, Scenario, ScenarioConfig, DEFAULT_SEED};
use harmonium::{Error, Harmonium, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "harmonium-cli", version, about = "Conjugated harmonium demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its data files.
    Run {
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long)]
        neurons: Option<usize>,
        /// File of `key=value` lines with the same keys as the flags.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Report the conjugation residual of a saved model.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        probes: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn read_config(path: &Path) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (n, line) in std::fs::read_to_string(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse().map_err(|_| Error::Config(format!("invalid value {v:?} for {key}"))))
        .transpose()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, seed, out, epochs, components, neurons, config } => {
            let file = match &config {
                Some(p) => read_config(p)?,
                None => HashMap::new(),
            };
            let scenario = match scenario {
                Some(s) => s,
                None => parse(&file, "scenario")?.ok_or_else(|| Error::Config("no scenario given".into()))?,
            };
            let out = out.or(parse(&file, "out")?).unwrap_or_else(|| PathBuf::from("out"));
            let cfg = ScenarioConfig {
                scenario,
                seed: seed.or(parse(&file, "seed")?).unwrap_or(DEFAULT_SEED),
                out_dir: out,
                epochs: epochs.or(parse(&file, "epochs")?),
                components: components.or(parse(&file, "components")?),
                neurons: neurons.or(parse(&file, "neurons")?),
            };
            let report = run_scenario(&cfg)?;
            for path in &report.files {
                println!("wrote {}", path.display());
            }
            for (k, v) in &report.metrics {
                println!("{k} = {v}");
            }
        }
        Command::Verify { model, probes: count, seed } => {
            let h: Harmonium = serde_json::from_str(&std::fs::read_to_string(&model)?)?;
            let points = probes(h.lat(), count, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let c = match exact_conjugation(&h) {
                Ok(c) => c,
                Err(Error::Unsupported(_)) => fit_conjugation(&h, &points)?.0,
                Err(e) => return Err(e),
            };
            let residual = verify_conjugation(&h, &c, &points)?;
            println!("chi = {}", c.chi);
            println!("rho = {:?}", c.rho.as_slice());
            println!("residual = {residual}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
