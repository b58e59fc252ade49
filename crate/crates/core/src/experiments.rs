//! Desk-scale demonstrations, one per [`Scenario`], writing CSV and JSON
//! data files for plotting.
//!
//! Each scenario also exposes the computation behind its files as plain
//! functions, so tests and examples can check the numbers without touching
//! the filesystem.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::conjugation::{dirichlet_categorical_harmonium, fit_conjugation, mixture_from_components, probes};
use crate::error::{Error, Result};
use crate::exfam::{categorical, com_poisson_count_moments, normal, Family, Observation};
use crate::harmonium::{Conjugation, Harmonium};
use crate::inference::{recursive_update_shared, ConjugatedLikelihood};
use crate::learning::{self, cross_entropy, fit, initialize, initialize_from_data, initialize_scaled, subspace_fit, Algorithm, FitTrace, Subspace, TrainConfig};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    MixtureNormal,
    GaussianBoltzmann,
    PopulationCode,
    DirichletInference,
    VonMisesTraining,
    ComMixture,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::MixtureNormal,
        Scenario::GaussianBoltzmann,
        Scenario::PopulationCode,
        Scenario::DirichletInference,
        Scenario::VonMisesTraining,
        Scenario::ComMixture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::MixtureNormal => "mixture-normal",
            Scenario::GaussianBoltzmann => "gaussian-boltzmann",
            Scenario::PopulationCode => "population-code",
            Scenario::DirichletInference => "dirichlet-inference",
            Scenario::VonMisesTraining => "vonmises-training",
            Scenario::ComMixture => "com-mixture",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub epochs: Option<usize>,
    /// Number of mixture components, where the scenario has them.
    pub components: Option<usize>,
    /// Number of latent Boltzmann neurons or observed Poisson neurons.
    pub neurons: Option<usize>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, out_dir: impl Into<PathBuf>) -> Self {
        ScenarioConfig { scenario, seed: DEFAULT_SEED, out_dir: out_dir.into(), epochs: None, components: None, neurons: None }
    }
}

/// Files written by a scenario and its headline numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub scenario: Scenario,
    pub files: Vec<PathBuf>,
    pub metrics: Vec<(String, f64)>,
}

impl Report {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut body = header.join(",");
        body.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
        self.text(name, &body)
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<()> {
        let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        self.csv(name, &header, m.row_iter().map(|r| r.iter().copied().collect()))
    }

    fn observations(&mut self, name: &str, data: &[Observation]) -> Result<()> {
        let dim = data.first().map_or(0, |x| x.len());
        let header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        self.csv(name, &header, data.iter().map(|x| x.to_vec()))
    }

    fn model(&mut self, name: &str, h: &Harmonium) -> Result<()> {
        let mut json = serde_json::to_string_pretty(h)?;
        json.push('\n');
        self.text(name, &json)
    }

    fn summary(&mut self, metrics: &[(String, f64)]) -> Result<()> {
        let mut body = String::from("metric,value\n");
        for (k, v) in metrics {
            writeln!(body, "{k},{v}").expect("write to string");
        }
        self.text("summary.csv", &body)
    }
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Trapezoid integral of samples on a uniform grid with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Trapezoid integral over a row-major `nx x ny` grid.
pub fn trapezoid_2d(values: &[f64], nx: usize, ny: usize, hx: f64, hy: f64) -> f64 {
    let rows: Vec<f64> = (0..nx).map(|i| trapezoid(&values[i * ny..(i + 1) * ny], hy)).collect();
    trapezoid(&rows, hx)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The dataset a scenario trains or conditions on.
pub fn generate_dataset(scenario: Scenario, seed: u64) -> Result<Vec<Observation>> {
    match scenario {
        Scenario::MixtureNormal => {
            let (h, c) = mixture_normal_model()?;
            observable_draws(&h, &c, 500, &mut rng_for(seed, 1))
        }
        Scenario::GaussianBoltzmann => Ok(two_circles(200, &mut rng_for(seed, 1))),
        Scenario::PopulationCode => Ok(population_trials(&PopulationCode::new(8)?, 3, &mut rng_for(seed, 1))?
            .into_iter()
            .map(|(_, n)| n)
            .collect()),
        Scenario::DirichletInference => dirichlet_observations(30, &mut rng_for(seed, 1)),
        Scenario::VonMisesTraining => {
            let (h, c) = vonmises_ground_truth()?;
            observable_draws(&h, &c, 100, &mut rng_for(seed, 1))
        }
        Scenario::ComMixture => {
            let (h, c) = com_ground_truth()?;
            observable_draws(&h, &c, COM_SAMPLES, &mut rng_for(seed, 1))
        }
    }
}

fn observable_draws<R: Rng + ?Sized>(h: &Harmonium, c: &Conjugation, n: usize, rng: &mut R) -> Result<Vec<Observation>> {
    Ok(h.sample_joint(c, rng, n)?.into_iter().map(|(x, _)| x).collect())
}

/// Runs a scenario and writes its files into `config.out_dir`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Report> {
    let mut w = Writer::new(&config.out_dir)?;
    let metrics = match config.scenario {
        Scenario::MixtureNormal => run_mixture_normal(config, &mut w)?,
        Scenario::GaussianBoltzmann => run_gaussian_boltzmann(config, &mut w)?,
        Scenario::PopulationCode => run_population_code(config, &mut w)?,
        Scenario::DirichletInference => run_dirichlet(config, &mut w)?,
        Scenario::VonMisesTraining => run_vonmises(config, &mut w)?,
        Scenario::ComMixture => run_com(config, &mut w)?,
    };
    w.summary(&metrics)?;
    Ok(Report { scenario: config.scenario, files: w.files, metrics })
}

fn metric(name: &str, value: f64) -> (String, f64) {
    (name.to_string(), value)
}

// ---------------------------------------------------------------- mixture

pub const MIXTURE_WEIGHTS: [f64; 3] = [0.5, 0.2, 0.3];
pub const MIXTURE_MEANS: [f64; 3] = [-3.0, 0.0, 3.0];

/// Three unit-variance normals at -3, 0, 3.
pub fn mixture_normal_model() -> Result<(Harmonium, Conjugation)> {
    let comps: Vec<DVector<f64>> = MIXTURE_MEANS.iter().map(|m| DVector::from_vec(vec![*m, -0.5])).collect();
    mixture_from_components(Family::MultivariateNormal { dim: 1 }, &MIXTURE_WEIGHTS, &comps)
}

fn run_mixture_normal(cfg: &ScenarioConfig, w: &mut Writer) -> Result<Vec<(String, f64)>> {
    let (h, c) = mixture_normal_model()?;
    w.model("model.json", &h)?;
    let xs = grid(-10.0, 10.0, 2001);
    let prior = categorical::weights(&h.prior_params(&c)?);
    let norm = h.joint_log_partition(&c)?;
    let mut mixture = Vec::with_capacity(xs.len());
    let mut rows = Vec::with_capacity(xs.len());
    for &x in &xs {
        let mut row = vec![x];
        for k in 0..prior.len() {
            row.push((h.obs().log_density(&h.likelihood_params(&[k as f64])?, &[x])?).exp());
        }
        let q = h.observable_log_density_with(norm, &[x])?.exp();
        mixture.push(q);
        row.push(q);
        rows.push(row);
    }
    w.csv("densities.csv", &["x", "component_0", "component_1", "component_2", "mixture"], rows)?;
    let mut post_rows = Vec::new();
    for x in [-1.5, 0.0, 1.5] {
        let post = categorical::weights(&h.posterior_params(&[x])?);
        post_rows.push([vec![x], post].concat());
    }
    w.csv("posterior.csv", &["x", "weight_0", "weight_1", "weight_2"], post_rows)?;

    let data = generate_dataset(Scenario::MixtureNormal, cfg.seed)?;
    w.observations("data.csv", &data)?;
    let h0 = initialize(h.obs(), h.lat(), &mut rng_for(cfg.seed, 2))?;
    let train = TrainConfig {
        algorithm: Algorithm::Em,
        epochs: cfg.epochs.unwrap_or(100),
        seed: cfg.seed,
        ..Default::default()
    };
    let trace = fit(&h0, &data, &train)?;
    w.text("trace.csv", &trace.to_csv())?;
    w.model("fitted.json", &trace.model)?;
    Ok(vec![
        metric("density_integral", trapezoid(&mixture, xs[1] - xs[0])),
        metric("true_cross_entropy", cross_entropy(&h, &c, &data)?),
        metric("fitted_cross_entropy", trace.final_cross_entropy()),
    ])
}

// ------------------------------------------------------ gaussian-boltzmann

pub const CIRCLE_RADII: [f64; 2] = [1.0, 2.0];
pub const CIRCLE_NOISE: f64 = 0.15;

/// `per_circle` points on each of two concentric circles with isotropic noise.
pub fn two_circles<R: Rng + ?Sized>(per_circle: usize, rng: &mut R) -> Vec<Observation> {
    let noise = Normal::new(0.0, CIRCLE_NOISE).expect("valid");
    let mut out = Vec::with_capacity(2 * per_circle);
    for r in CIRCLE_RADII {
        for _ in 0..per_circle {
            let a = rng.random::<f64>() * TAU;
            out.push(Observation::new(vec![r * a.cos() + noise.sample(rng), r * a.sin() + noise.sample(rng)]));
        }
    }
    out
}

/// Cross-entropy on `test` of the single bivariate normal fitted to `train`.
pub fn gaussian_mle_cross_entropy(train: &[Observation], test: &[Observation]) -> Result<f64> {
    let fam = Family::MultivariateNormal { dim: 2 };
    let stats = train.iter().map(|x| fam.sufficient_statistic(x)).collect::<Result<Vec<_>>>()?;
    let eta = stats.iter().fold(DVector::zeros(5), |a, s| a + s) / train.len() as f64;
    let theta = fam.to_natural(&eta)?;
    let total = test.iter().map(|x| fam.log_density(&theta, x)).sum::<Result<f64>>()?;
    Ok(-total / test.len() as f64)
}

/// CE-GD training of a Gaussian-Boltzmann harmonium.
pub fn train_gaussian_boltzmann(data: &[Observation], neurons: usize, epochs: usize, seed: u64) -> Result<FitTrace> {
    let obs = Family::MultivariateNormal { dim: 2 };
    let lat = Family::boltzmann(neurons)?;
    let h0 = initialize_scaled(&obs, &lat, GAUSSIAN_BOLTZMANN_INIT_SD, &mut rng_for(seed, 2))?;
    let cfg = TrainConfig { algorithm: Algorithm::CeGd, epochs, seed, ..Default::default() };
    fit(&h0, data, &cfg)
}

pub const GAUSSIAN_BOLTZMANN_EPOCHS: usize = 5000;
/// Spread of the starting interactions, wide enough to break the symmetry
/// between latent neurons early.
pub const GAUSSIAN_BOLTZMANN_INIT_SD: f64 = 0.5;

fn run_gaussian_boltzmann(cfg: &ScenarioConfig, w: &mut Writer) -> Result<Vec<(String, f64)>> {
    let neurons = cfg.neurons.unwrap_or(6);
    let train = generate_dataset(Scenario::GaussianBoltzmann, cfg.seed)?;
    let test = two_circles(200, &mut rng_for(cfg.seed, 3));
    w.observations("data.csv", &train)?;
    let trace = train_gaussian_boltzmann(&train, neurons, cfg.epochs.unwrap_or(GAUSSIAN_BOLTZMANN_EPOCHS), cfg.seed)?;
    w.text("trace.csv", &trace.to_csv())?;
    let (h, c) = (&trace.model, &trace.conjugation);
    w.model("model.json", h)?;

    let mut comps = Vec::new();
    for i in 0..neurons {
        let mut z = vec![0.0; neurons];
        z[i] = 1.0;
        let (mean, cov) = normal::moments(2, h.likelihood_params(&z)?.as_slice())?;
        comps.push(vec![i as f64, mean[0], mean[1], cov[(0, 0)], cov[(1, 0)], cov[(1, 1)]]);
    }
    w.csv("components.csv", &["neuron", "mean_x", "mean_y", "var_x", "cov_xy", "var_y"], comps)?;

    let axis = grid(-4.0, 4.0, 201);
    let norm = h.joint_log_partition(c)?;
    let mut dens = Vec::with_capacity(axis.len() * axis.len());
    let mut rows = Vec::with_capacity(dens.capacity());
    for &x in &axis {
        for &y in &axis {
            let q = h.observable_log_density_with(norm, &[x, y])?.exp();
            dens.push(q);
            rows.push(vec![x, y, q]);
        }
    }
    w.csv("density.csv", &["x", "y", "density"], rows)?;
    let step = axis[1] - axis[0];
    let integral = trapezoid_2d(&dens, axis.len(), axis.len(), step, step);

    let prior_eta = h.lat().to_mean(&h.prior_params(c)?)?;
    w.matrix("prior_correlation.csv", &correlation(&second_moments(neurons, &prior_eta)))?;
    let probes_x = [[1.0, 0.0], [0.0, -1.0], [2.0, 0.0], [-SQRT_2, SQRT_2]];
    let mut moment_rows = Vec::new();
    for (p, x) in probes_x.iter().enumerate() {
        let eta = h.lat().to_mean(&h.posterior_params(x)?)?;
        let (_, ezz) = second_moments(neurons, &eta);
        for i in 0..neurons {
            for j in 0..neurons {
                moment_rows.push(vec![p as f64, x[0], x[1], i as f64, j as f64, ezz[(i, j)]]);
            }
        }
    }
    w.csv("posterior_moments.csv", &["probe", "x", "y", "i", "j", "moment"], moment_rows)?;

    let model_ce = cross_entropy(h, c, &test)?;
    let gauss_ce = gaussian_mle_cross_entropy(&train, &test)?;
    Ok(vec![
        metric("train_cross_entropy", trace.final_cross_entropy()),
        metric("heldout_cross_entropy", model_ce),
        metric("gaussian_heldout_cross_entropy", gauss_ce),
        metric("improvement_nats", gauss_ce - model_ce),
        metric("density_integral", integral),
    ])
}

fn second_moments(neurons: usize, eta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    learning::latent_moments(&Family::Boltzmann { neurons }, neurons, eta)
}

/// Correlation matrix from `(E[z], E[z z^T])`.
pub fn correlation((mean, second): &(DVector<f64>, DMatrix<f64>)) -> DMatrix<f64> {
    let cov = second - mean * mean.transpose();
    covariance_to_correlation(&cov)
}

fn covariance_to_correlation(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sd = cov.diagonal().map(|v| v.max(0.0).sqrt());
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        let d = sd[i] * sd[j];
        if d > 0.0 {
            cov[(i, j)] / d
        } else {
            0.0
        }
    })
}

// --------------------------------------------------------- population code

pub const TUNING_GAIN: f64 = 10.0;
pub const TUNING_CONCENTRATION: f64 = 2.0;

/// Independent Poisson neurons with von Mises tuning curves
/// `gain exp(kappa (cos(z - phi_i) - 1))` at evenly spaced preferred angles.
#[derive(Clone, Debug)]
pub struct PopulationCode {
    pub harmonium: Harmonium,
    pub conjugation: Conjugation,
    /// Largest deviation of the fitted conjugation over the probes.
    pub residual: f64,
    pub probes: Vec<Observation>,
}

impl PopulationCode {
    pub fn new(neurons: usize) -> Result<Self> {
        Self::with_prior(neurons, &DVector::from_vec(vec![0.5, 0.5]))
    }

    /// `prior` holds the von Mises natural parameters of the stimulus prior.
    pub fn with_prior(neurons: usize, prior: &DVector<f64>) -> Result<Self> {
        if neurons == 0 {
            return Err(Error::Config("population code needs at least one neuron".into()));
        }
        let obs = Family::PoissonProduct { neurons };
        let lat = Family::VonMisesProduct { dim: 1 };
        let bias = DVector::from_element(neurons, TUNING_GAIN.ln() - TUNING_CONCENTRATION);
        let interaction = DMatrix::from_fn(neurons, 2, |i, j| {
            let phi = TAU * i as f64 / neurons as f64;
            TUNING_CONCENTRATION * if j == 0 { phi.cos() } else { phi.sin() }
        });
        let draft = Harmonium::new(obs.clone(), lat.clone(), bias.clone(), prior.clone(), interaction.clone())?;
        let probe_points = probes(&lat, 64, &mut ChaCha8Rng::seed_from_u64(0))?;
        let (c, residual) = fit_conjugation(&draft, &probe_points)?;
        let h = Harmonium::new(obs, lat, bias, prior - &c.rho, interaction)?;
        Ok(PopulationCode { harmonium: h, conjugation: c, residual, probes: probe_points })
    }

    /// Tuning curves `E[N_i | z]`.
    pub fn tuning(&self, z: f64) -> Result<DVector<f64>> {
        Ok(self.harmonium.likelihood_params(&[z])?.map(f64::exp))
    }

    /// Exact posterior density over a grid of angles by normalizing
    /// prior times Poisson likelihood, ignoring conjugation.
    pub fn grid_posterior(&self, counts: &[f64], angles: &[f64]) -> Result<Vec<f64>> {
        let h = &self.harmonium;
        let prior = h.prior_params(&self.conjugation)?;
        let logs = angles
            .iter()
            .map(|&z| {
                let lik = h.obs().log_density(&h.likelihood_params(&[z])?, counts)?;
                Ok(lik + h.lat().log_density(&prior, &[z])?)
            })
            .collect::<Result<Vec<f64>>>()?;
        let step = angles[1] - angles[0];
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
        let z = trapezoid(&unnorm, step);
        Ok(unnorm.iter().map(|u| u / z).collect())
    }

    /// Posterior density of the conjugated decoder on a grid of angles.
    pub fn decoded_posterior(&self, counts: &[f64], angles: &[f64]) -> Result<Vec<f64>> {
        let post = self.harmonium.posterior_params(counts)?;
        angles.iter().map(|&z| Ok(self.harmonium.lat().log_density(&post, &[z])?.exp())).collect()
    }
}

/// Stimulus and spike-count pairs drawn from the population code's model.
pub fn population_trials<R: Rng + ?Sized>(
    code: &PopulationCode,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<(Observation, Observation)>> {
    Ok(code.harmonium.sample_joint(&code.conjugation, rng, trials)?.into_iter().map(|(n, z)| (z, n)).collect())
}

/// Total variation distance between two densities on a uniform grid.
pub fn total_variation(p: &[f64], q: &[f64], step: f64) -> f64 {
    let diff: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).abs()).collect();
    0.5 * trapezoid(&diff, step)
}

/// Angles `0, .., 2 pi` inclusive for periodic trapezoid integration.
pub fn circle_grid(n: usize) -> Vec<f64> {
    grid(0.0, TAU, n)
}

fn run_population_code(cfg: &ScenarioConfig, w: &mut Writer) -> Result<Vec<(String, f64)>> {
    let neurons = cfg.neurons.unwrap_or(8);
    let code = PopulationCode::new(neurons)?;
    let h = &code.harmonium;
    w.model("model.json", h)?;
    let angles = circle_grid(721);
    let step = angles[1] - angles[0];
    let (rho, chi) = (&code.conjugation.rho, code.conjugation.chi);
    let mut rows = Vec::with_capacity(angles.len());
    let mut header = vec!["z".to_string()];
    header.extend((0..neurons).map(|i| format!("rate_{i}")));
    header.extend(["total".to_string(), "linear_fit".to_string()]);
    for &z in &angles {
        let f = code.tuning(z)?;
        let fit = rho[0] * z.cos() + rho[1] * z.sin() + chi;
        let mut row = vec![z];
        row.extend(f.iter());
        row.extend([f.sum(), fit]);
        rows.push(row);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv("tuning.csv", &header_refs, rows)?;

    // count covariance under q_N: diag(E[f]) + Cov(f) over the prior
    let prior = h.prior_params(&code.conjugation)?;
    let weights: Vec<f64> = angles.iter().map(|&z| h.lat().log_density(&prior, &[z]).map(f64::exp)).collect::<Result<_>>()?;
    let rates: Vec<DVector<f64>> = angles.iter().map(|&z| code.tuning(z)).collect::<Result<_>>()?;
    let mut mean = DVector::zeros(neurons);
    let mut second = DMatrix::zeros(neurons, neurons);
    for (k, (wt, f)) in weights.iter().zip(&rates).enumerate() {
        let tw = if k == 0 || k == angles.len() - 1 { 0.5 * wt * step } else { wt * step };
        mean.axpy(tw, f, 1.0);
        second.ger(tw, f, f, 1.0);
    }
    let cov = &second - &mean * mean.transpose() + DMatrix::from_diagonal(&mean);
    w.matrix("count_correlation.csv", &covariance_to_correlation(&cov))?;

    let trials = population_trials(&code, 3, &mut rng_for(cfg.seed, 1))?;
    let mut rows = Vec::with_capacity(angles.len());
    let mut worst_tv = 0.0f64;
    let mut decoded = Vec::new();
    let mut exact = Vec::new();
    for (_, n) in &trials {
        let d = code.decoded_posterior(n, &angles)?;
        let e = code.grid_posterior(n, &angles)?;
        worst_tv = worst_tv.max(total_variation(&d, &e, step));
        decoded.push(d);
        exact.push(e);
    }
    for (k, &z) in angles.iter().enumerate() {
        let mut row = vec![z, weights[k]];
        for t in 0..trials.len() {
            row.extend([decoded[t][k], exact[t][k]]);
        }
        rows.push(row);
    }
    w.csv(
        "posterior.csv",
        &["z", "prior", "posterior_0", "grid_0", "posterior_1", "grid_1", "posterior_2", "grid_2"],
        rows,
    )?;
    let mut trial_rows = Vec::new();
    for (z, n) in &trials {
        trial_rows.push([z.to_vec(), n.to_vec()].concat());
    }
    let mut header = vec!["stimulus".to_string()];
    header.extend((0..neurons).map(|i| format!("count_{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv("trials.csv", &header_refs, trial_rows)?;

    Ok(vec![
        metric("chi", chi),
        metric("fit_residual", code.residual),
        metric("residual_over_chi", code.residual / chi.abs()),
        metric("max_posterior_tv", worst_tv),
    ])
}

// ------------------------------------------------------------- dirichlet

pub const DIRICHLET_TRUE_WEIGHTS: [f64; 3] = [0.05, 0.15, 0.8];
/// Natural parameters `alpha - 1` of the Dirichlet prior.
pub const DIRICHLET_PRIOR: [f64; 3] = [9.0, 9.0, 9.0];

/// Dirichlet-categorical harmonium whose prior is [`DIRICHLET_PRIOR`].
pub fn dirichlet_model() -> Result<(Harmonium, Conjugation)> {
    let prior = DVector::from_column_slice(&DIRICHLET_PRIOR);
    let (draft, c) = dirichlet_categorical_harmonium(2, prior.clone())?;
    let h = Harmonium::new(
        draft.obs().clone(),
        draft.lat().clone(),
        draft.obs_bias().clone(),
        prior - &c.rho,
        draft.interaction().clone(),
    )?;
    Ok((h, c))
}

/// `n` draws from the categorical with [`DIRICHLET_TRUE_WEIGHTS`].
pub fn dirichlet_observations<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<Observation>> {
    let theta = Family::Categorical { states: 2 }.to_natural(&DVector::from_column_slice(&DIRICHLET_TRUE_WEIGHTS[1..]))?;
    Family::Categorical { states: 2 }.sample(&theta, rng, n)
}

/// Posterior natural parameters after the first `n` observations.
pub fn dirichlet_posterior(h: &Harmonium, c: &Conjugation, data: &[Observation], n: usize) -> Result<DVector<f64>> {
    let lik = ConjugatedLikelihood::from_harmonium(h, c)?;
    recursive_update_shared(&h.prior_params(c)?, &lik, &data[..n.min(data.len())])
}

/// Mean weights `alpha / sum(alpha)` of a Dirichlet with natural parameters `theta`.
pub fn dirichlet_mean(theta: &DVector<f64>) -> DVector<f64> {
    let alpha = theta.map(|t| t + 1.0);
    let total = alpha.sum();
    alpha / total
}

fn simplex_grid(theta: &DVector<f64>) -> Result<(Vec<Vec<f64>>, f64)> {
    let fam = Family::Dirichlet { dim: 2 };
    let axis = grid(0.0, 1.0, 201);
    let mut rows = Vec::with_capacity(axis.len() * axis.len());
    let mut vals = Vec::with_capacity(rows.capacity());
    for &a in &axis {
        for &b in &axis {
            let rest = 1.0 - a - b;
            let q = if a > 0.0 && b > 0.0 && rest > 1e-12 { fam.log_density(theta, &[rest, a, b])?.exp() } else { 0.0 };
            vals.push(q);
            rows.push(vec![a, b, q]);
        }
    }
    let step = axis[1] - axis[0];
    Ok((rows, trapezoid_2d(&vals, axis.len(), axis.len(), step, step)))
}

fn run_dirichlet(cfg: &ScenarioConfig, w: &mut Writer) -> Result<Vec<(String, f64)>> {
    let (h, c) = dirichlet_model()?;
    w.model("model.json", &h)?;
    let data = generate_dataset(Scenario::DirichletInference, cfg.seed)?;
    w.observations("observations.csv", &data)?;
    let header = ["weight_1", "weight_2", "density"];
    let (rows, prior_integral) = simplex_grid(&h.prior_params(&c)?)?;
    w.csv("prior.csv", &header, rows)?;
    let mut metrics = vec![metric("prior_integral", prior_integral)];
    let truth = DVector::from_column_slice(&DIRICHLET_TRUE_WEIGHTS);
    let mut centers = Vec::new();
    for n in [10, 20, 30] {
        let post = dirichlet_posterior(&h, &c, &data, n)?;
        let (rows, integral) = simplex_grid(&post)?;
        w.csv(&format!("posterior_{n:03}.csv"), &header, rows)?;
        let err = (dirichlet_mean(&post) - &truth).abs().sum();
        metrics.push(metric(&format!("posterior_integral_{n:03}"), integral));
        metrics.push(metric(&format!("mean_error_{n:03}"), err));
        let block = &data[n - 10..n];
        let freq: Vec<f64> = (0..3).map(|k| block.iter().filter(|x| x.as_index() == Some(k)).count() as f64 / 10.0).collect();
        centers.push(vec![n as f64, freq[1], freq[2]]);
    }
    w.csv("centers.csv", &["observations", "weight_1", "weight_2"], centers)?;
    w.csv("truth.csv", &["weight_0", "weight_1", "weight_2"], [DIRICHLET_TRUE_WEIGHTS.to_vec()])?;
    Ok(metrics)
}

// -------------------------------------------------------------- von Mises

/// Ground-truth mixture of three products of two von Mises densities.
pub fn vonmises_ground_truth() -> Result<(Harmonium, Conjugation)> {
    let comp = |mu1: f64, mu2: f64, k: f64| {
        DVector::from_vec(vec![k * mu1.cos(), k * mu1.sin(), k * mu2.cos(), k * mu2.sin()])
    };
    let comps = [comp(0.5 * PI, 0.5 * PI, 3.0), comp(1.5 * PI, PI, 2.5), comp(PI, 1.75 * PI, 2.0)];
    mixture_from_components(Family::VonMisesProduct { dim: 2 }, &[0.3, 0.3, 0.4], &comps)
}

pub const VONMISES_ALGORITHMS: [Algorithm; 4] = [Algorithm::CeGd, Algorithm::EmGd, Algorithm::CeMcgd, Algorithm::EmMcgd];

/// Result of training every gradient algorithm on the same data.
#[derive(Clone, Debug)]
pub struct VonMisesRun {
    pub data: Vec<Observation>,
    pub ground_truth_cross_entropy: f64,
    pub runs: Vec<(Algorithm, FitTrace)>,
}

pub fn vonmises_training(seed: u64, epochs: usize, components: usize) -> Result<VonMisesRun> {
    let (truth, tc) = vonmises_ground_truth()?;
    let data = generate_dataset(Scenario::VonMisesTraining, seed)?;
    let lat = Family::Categorical { states: components.max(2) - 1 };
    let h0 = initialize_from_data(truth.obs(), &lat, &data, &mut rng_for(seed, 2))?;
    let runs = VONMISES_ALGORITHMS
        .iter()
        .map(|&algorithm| {
            let cfg = TrainConfig { algorithm, epochs, seed, ..Default::default() };
            Ok((algorithm, fit(&h0, &data, &cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VonMisesRun { ground_truth_cross_entropy: cross_entropy(&truth, &tc, &data)?, data, runs })
}

fn run_vonmises(cfg: &ScenarioConfig, w: &mut Writer) -> Result<Vec<(String, f64)>> {
    let run = vonmises_training(cfg.seed, cfg.epochs.unwrap_or(500), cfg.components.unwrap_or(3))?;
    w.observations("data.csv", &run.data)?;
    w.model("ground_truth.json", &vonmises_ground_truth()?.0)?;
    let mut metrics = vec![metric("ground_truth_cross_entropy", run.ground_truth_cross_entropy)];
    for (alg, trace) in &run.runs {
        w.text(&format!("trace_{alg}.csv"), &trace.to_csv())?;
        w.model(&format!("model_{alg}.json"), &trace.model)?;
        metrics.push(metric(&format!("final_cross_entropy_{alg}"), trace.final_cross_entropy()));
        metrics.push(metric(
            &format!("gap_{alg}"),
            trace.final_cross_entropy() - run.ground_truth_cross_entropy,
        ));
    }
    Ok(metrics)
}

// ------------------------------------------------------------ CoM mixture

pub const COM_SAMPLES: usize = 400;
pub const COM_DIM: usize = 5;
/// Dispersion `nu` per coordinate, shared by every component.
pub const COM_DISPERSION: [f64; COM_DIM] = [1.0, 1.5, 2.0, 2.5, 2.5];

/// Ground-truth three-component CoM-Poisson mixture whose components differ
/// only in location.
pub fn com_ground_truth() -> Result<(Harmonium, Conjugation)> {
    let rates: [[f64; COM_DIM]; 3] = [[2.0, 4.0, 6.0, 8.0, 5.0], [6.0, 3.0, 10.0, 5.0, 6.0], [4.0, 8.0, 3.0, 6.0, 7.0]];
    let comps: Vec<DVector<f64>> = rates
        .iter()
        .map(|r| {
            DVector::from_iterator(
                2 * COM_DIM,
                (0..COM_DIM).flat_map(|j| [r[j].ln() * COM_DISPERSION[j], -COM_DISPERSION[j]]),
            )
        })
        .collect();
    mixture_from_components(Family::CoMPoissonProduct { dim: COM_DIM }, &[0.3, 0.3, 0.4], &comps)
}

/// Embedding that keeps every bias and only the interaction rows of the
/// location coordinates.
pub fn com_subspace(dim: usize, components: usize) -> Result<Subspace> {
    let (dx, dz) = (2 * dim, components - 1);
    let mut keep: Vec<usize> = (0..dx + dz).collect();
    for i in (0..dx).step_by(2) {
        keep.extend((0..dz).map(|j| dx + dz + i * dz + j));
    }
    Subspace::selection(dx + dz + dx * dz, &keep)
}

/// Per-coordinate count Fano factors of a CoM-Poisson mixture.
pub fn com_mixture_fano(h: &Harmonium, c: &Conjugation) -> Result<Vec<f64>> {
    let weights = categorical::weights(&h.prior_params(c)?);
    let dim = h.obs().observation_len();
    let mut mean = vec![0.0; dim];
    let mut second = vec![0.0; dim];
    for (k, w) in weights.iter().enumerate() {
        let theta = if k == 0 { h.obs_bias().clone() } else { h.obs_bias() + h.interaction().column(k - 1) };
        for (j, (m, v)) in com_poisson_count_moments(&theta)?.into_iter().enumerate() {
            mean[j] += w * m;
            second[j] += w * (v + m * m);
        }
    }
    Ok((0..dim).map(|j| (second[j] - mean[j] * mean[j]) / mean[j]).collect())
}

/// Sample Fano factors (unbiased variance over mean) per coordinate.
pub fn sample_fano(data: &[Observation]) -> Vec<f64> {
    let dim = data.first().map_or(0, |x| x.len());
    let n = data.len() as f64;
    (0..dim)
        .map(|j| {
            let mean = data.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = data.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            var / mean
        })
        .collect()
}

fn sample_covariance(data: &[Observation]) -> DMatrix<f64> {
    let dim = data.first().map_or(0, |x| x.len());
    let n = data.len() as f64;
    let mean = data.iter().fold(DVector::zeros(dim), |a, x| a + DVector::from_column_slice(x)) / n;
    let mut cov = DMatrix::zeros(dim, dim);
    for x in data {
        let d = DVector::from_column_slice(x) - &mean;
        cov.ger(1.0 / (n - 1.0), &d, &d, 1.0);
    }
    cov
}

fn com_mixture_covariance(h: &Harmonium, c: &Conjugation) -> Result<DMatrix<f64>> {
    let weights = categorical::weights(&h.prior_params(c)?);
    let dim = h.obs().observation_len();
    let mut mean = DVector::zeros(dim);
    let mut second = DMatrix::zeros(dim, dim);
    for (k, w) in weights.iter().enumerate() {
        let theta = if k == 0 { h.obs_bias().clone() } else { h.obs_bias() + h.interaction().column(k - 1) };
        let moments = com_poisson_count_moments(&theta)?;
        let m = DVector::from_iterator(dim, moments.iter().map(|p| p.0));
        mean.axpy(*w, &m, 1.0);
        second.ger(*w, &m, &m, 1.0);
        for (j, (_, v)) in moments.iter().enumerate() {
            second[(j, j)] += w * v;
        }
    }
    Ok(second - &mean * mean.transpose())
}

#[derive(Clone, Debug)]
pub struct ComRun {
    pub data: Vec<Observation>,
    pub trace: FitTrace,
    pub sample_fano: Vec<f64>,
    pub model_fano: Vec<f64>,
}

/// EM-GD training of a CoM-Poisson mixture restricted to location interactions.
pub fn com_training(seed: u64, epochs: usize, components: usize) -> Result<ComRun> {
    let data = generate_dataset(Scenario::ComMixture, seed)?;
    let obs = Family::CoMPoissonProduct { dim: COM_DIM };
    let lat = Family::Categorical { states: components.max(2) - 1 };
    let h0 = initialize_from_data(&obs, &lat, &data, &mut rng_for(seed, 2))?;
    let subspace = com_subspace(COM_DIM, components.max(2))?;
    let cfg = TrainConfig { algorithm: Algorithm::EmGd, epochs, seed, ..Default::default() };
    let trace = subspace_fit(&h0, &subspace, &data, &cfg)?;
    let model_fano = com_mixture_fano(&trace.model, &trace.conjugation)?;
    Ok(ComRun { sample_fano: sample_fano(&data), model_fano, trace, data })
}

fn run_com(cfg: &ScenarioConfig, w: &mut Writer) -> Result<Vec<(String, f64)>> {
    let run = com_training(cfg.seed, cfg.epochs.unwrap_or(1000), cfg.components.unwrap_or(3))?;
    w.observations("data.csv", &run.data)?;
    w.text("trace.csv", &run.trace.to_csv())?;
    w.model("model.json", &run.trace.model)?;
    let model_cov = com_mixture_covariance(&run.trace.model, &run.trace.conjugation)?;
    let data_cov = sample_covariance(&run.data);
    w.matrix("model_covariance.csv", &model_cov)?;
    w.matrix("sample_covariance.csv", &data_cov)?;
    w.matrix("model_correlation.csv", &covariance_to_correlation(&model_cov))?;
    w.matrix("sample_correlation.csv", &covariance_to_correlation(&data_cov))?;
    w.csv(
        "fano.csv",
        &["coordinate", "sample", "model"],
        (0..run.sample_fano.len()).map(|j| vec![j as f64, run.sample_fano[j], run.model_fano[j]]),
    )?;
    let worst = run
        .sample_fano
        .iter()
        .zip(&run.model_fano)
        .map(|(s, m)| (m - s).abs() / s)
        .fold(0.0, f64::max);
    Ok(vec![
        metric("final_cross_entropy", run.trace.final_cross_entropy()),
        metric("max_fano_relative_error", worst),
        metric("min_model_fano", run.model_fano.iter().cloned().fold(f64::INFINITY, f64::min)),
    ])
}
