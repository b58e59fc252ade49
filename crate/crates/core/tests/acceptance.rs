//! Acceptance criteria, one reported line each. Runs as a plain binary so the
//! report is always printed.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use harmonium::conjugation::{
    bayes_estimation_harmonium, dirichlet_categorical_harmonium, exact_conjugation, fit_affine, lgm_from_moments,
    mixture_from_components, probes, verify_conjugation,
};
use harmonium::experiments::{
    self, circle_grid, com_training, dirichlet_mean, dirichlet_model, dirichlet_posterior, generate_dataset, grid,
    total_variation, trapezoid, vonmises_training, PopulationCode, Scenario, ScenarioConfig, DIRICHLET_TRUE_WEIGHTS,
};
use harmonium::inference::{bayes_update, ConjugatedLikelihood};
use harmonium::learning::{
    ce_gradient, cross_entropy, e_step, fit, gradient_against, initialize_from_data, m_step_exact,
    Algorithm, ModelClass, TrainConfig,
};
use harmonium::{exfam::categorical_weights, Conjugation, Family, Harmonium, Observation};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let took = start.elapsed();
    if took <= budget {
        Ok(())
    } else {
        Err(format!("took {took:.1?}, budget {budget:?}"))
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

fn random_spd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| gauss(rng));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5
}

fn random_obs_family<R: Rng>(rng: &mut R) -> Family {
    match rng.random_range(0..7) {
        0 => Family::PoissonProduct { neurons: rng.random_range(1..4) },
        1 => Family::MultivariateNormal { dim: rng.random_range(1..4) },
        2 => Family::VonMisesProduct { dim: rng.random_range(1..3) },
        3 => Family::Categorical { states: rng.random_range(1..5) },
        4 => Family::Boltzmann { neurons: rng.random_range(2..5) },
        5 => Family::CoMPoissonProduct { dim: rng.random_range(1..3) },
        _ => Family::Dirichlet { dim: rng.random_range(1..3) },
    }
}

fn random_mixture<R: Rng>(obs: Family, k: usize, rng: &mut R) -> (Harmonium, Conjugation) {
    let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let comps: Vec<DVector<f64>> = (0..k).map(|_| obs.random_natural(rng, 1.0)).collect();
    mixture_from_components(obs, &weights, &comps).expect("valid mixture")
}

fn random_lgm<R: Rng>(n: usize, m: usize, rng: &mut R) -> (Harmonium, Conjugation) {
    let mean_x = DVector::from_fn(n, |_, _| gauss(rng));
    let mean_z = DVector::from_fn(m, |_, _| gauss(rng));
    let loading = DMatrix::from_fn(n, m, |_, _| gauss(rng));
    lgm_from_moments(&mean_x, &random_spd(n, rng), &loading, &mean_z, &random_spd(m, rng)).expect("valid LGM")
}

fn random_gaussian_boltzmann<R: Rng>(n: usize, m: usize, rng: &mut R) -> (Harmonium, Conjugation) {
    let obs = Family::MultivariateNormal { dim: n };
    let lat = Family::Boltzmann { neurons: m };
    let obs_bias = obs.random_natural(rng, 1.0);
    let mut interaction = DMatrix::zeros(obs.dimension(), lat.dimension());
    for i in 0..n {
        for j in 0..m {
            interaction[(i, j)] = 0.5 * gauss(rng);
        }
    }
    let lat_bias = DVector::from_fn(lat.dimension(), |_, _| 0.5 * gauss(rng));
    let h = Harmonium::new(obs, lat, obs_bias, lat_bias, interaction).expect("valid");
    let c = exact_conjugation(&h).expect("conjugated");
    (h, c)
}

fn samples(h: &Harmonium, c: &Conjugation, n: usize, seed: u64) -> Vec<Observation> {
    h.sample_joint(c, &mut rng(seed), n).expect("sampling").into_iter().map(|(x, _)| x).collect()
}

/// Unnormalized log joint density computed directly from the statistics.
fn log_joint(h: &Harmonium, x: &[f64], z: &[f64]) -> f64 {
    let sx = h.obs().sufficient_statistic(x).unwrap();
    let sz = h.lat().sufficient_statistic(z).unwrap();
    sx.dot(h.obs_bias()) + sz.dot(h.lat_bias()) + sx.dot(&(h.interaction() * &sz))
        + h.obs().log_base_measure(x).unwrap()
        + h.lat().log_base_measure(z).unwrap()
}

fn tv_discrete(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

fn normalize_grid(v: &[f64], step: f64) -> Vec<f64> {
    let total = trapezoid(v, step);
    v.iter().map(|x| x / total).collect()
}

// 1
fn conjugation_exactness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = [0.0f64; 4];
    for i in 0..50 {
        let obs = random_obs_family(&mut r);
        let k = r.random_range(2..5);
        let (h, c) = random_mixture(obs, k, &mut r);
        let pts = probes(h.lat(), 100, &mut r).unwrap();
        worst[0] = worst[0].max(verify_conjugation(&h, &c, &pts).map_err(|e| e.to_string())?);

        let (n, m) = (r.random_range(1..4), r.random_range(1..4));
        let (h, c) = if i % 2 == 0 { random_lgm(n, m, &mut r) } else { random_gaussian_boltzmann(n, m + 2, &mut r) };
        let pts = probes(h.lat(), 100, &mut r).unwrap();
        worst[1] = worst[1].max(verify_conjugation(&h, &c, &pts).map_err(|e| e.to_string())?);

        let base = match i % 4 {
            0 => Family::PoissonProduct { neurons: r.random_range(1..4) },
            1 => Family::Categorical { states: r.random_range(1..4) },
            2 => Family::VonMisesProduct { dim: r.random_range(1..3) },
            _ => Family::Boltzmann { neurons: r.random_range(2..4) },
        };
        let (h, c) = bayes_estimation_harmonium(base).unwrap();
        let pts = probes(h.lat(), 100, &mut r).unwrap();
        worst[2] = worst[2].max(verify_conjugation(&h, &c, &pts).map_err(|e| e.to_string())?);

        let d = r.random_range(1..5);
        let bias = DVector::from_fn(d + 1, |_, _| r.random::<f64>() * 3.0);
        let (h, c) = dirichlet_categorical_harmonium(d, bias).unwrap();
        let pts = probes(h.lat(), 100, &mut r).unwrap();
        worst[3] = worst[3].max(verify_conjugation(&h, &c, &pts).map_err(|e| e.to_string())?);
    }
    within(start, Duration::from_secs(30))?;
    check(
        worst.iter().all(|&w| w < 1e-10),
        format!(
            "max residual mixture {:.1e}, linear-Gaussian {:.1e}, Bayes estimation {:.1e}, Dirichlet-categorical {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// 2
fn marginalization_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;

    // discrete observable, categorical latent: enumerate every joint state
    for obs in [Family::Categorical { states: 5 }, Family::Boltzmann { neurons: 6 }, Family::Boltzmann { neurons: 10 }] {
        let (h, c) = random_mixture(obs, 4, &mut r);
        let xs = h.obs().support().unwrap();
        let zs = h.lat().support().unwrap();
        let table: Vec<Vec<f64>> = xs.iter().map(|x| zs.iter().map(|z| log_joint(&h, x, z).exp()).collect()).collect();
        let total: f64 = table.iter().flatten().sum();
        let px: Vec<f64> = table.iter().map(|row| row.iter().sum::<f64>() / total).collect();
        let pz: Vec<f64> = (0..zs.len()).map(|j| table.iter().map(|row| row[j]).sum::<f64>() / total).collect();
        let qx: Vec<f64> = xs.iter().map(|x| h.observable_log_density(&c, x).unwrap().exp()).collect();
        let qz = categorical_weights(&h.prior_params(&c).unwrap());
        worst = worst.max(tv_discrete(&px, &qx)).max(tv_discrete(&pz, &qz));
    }

    // 1-d normal and von Mises observables over a categorical latent
    for obs in [Family::MultivariateNormal { dim: 1 }, Family::VonMisesProduct { dim: 1 }] {
        let (h, c) = random_mixture(obs.clone(), 3, &mut r);
        let xs = if obs == (Family::VonMisesProduct { dim: 1 }) { circle_grid(10_000) } else { grid(-40.0, 40.0, 10_000) };
        let step = xs[1] - xs[0];
        let zs = h.lat().support().unwrap();
        let cols: Vec<Vec<f64>> =
            zs.iter().map(|z| xs.iter().map(|&x| log_joint(&h, &[x], z).exp()).collect()).collect();
        let mass: Vec<f64> = cols.iter().map(|col| trapezoid(col, step)).collect();
        let total: f64 = mass.iter().sum();
        let pz: Vec<f64> = mass.iter().map(|m| m / total).collect();
        let px: Vec<f64> = (0..xs.len()).map(|i| cols.iter().map(|col| col[i]).sum::<f64>() / total).collect();
        let qx: Vec<f64> = xs.iter().map(|&x| h.observable_log_density(&c, &[x]).unwrap().exp()).collect();
        let sup = px.iter().zip(&qx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(sup).max(total_variation(&px, &qx, step));
        worst = worst.max(tv_discrete(&pz, &categorical_weights(&h.prior_params(&c).unwrap())));
    }

    // 1-d linear Gaussian model: nested quadrature over both variables
    let (h, c) = random_lgm(1, 1, &mut r);
    let nodes = grid(-40.0, 40.0, 10_000);
    let coarse = grid(-40.0, 40.0, 801);
    let (hf, hc) = (nodes[1] - nodes[0], coarse[1] - coarse[0]);
    let pz: Vec<f64> = coarse
        .iter()
        .map(|&z| trapezoid(&nodes.iter().map(|&x| log_joint(&h, &[x], &[z]).exp()).collect::<Vec<_>>(), hf))
        .collect();
    let pz = normalize_grid(&pz, hc);
    let prior = h.prior_params(&c).unwrap();
    let qz: Vec<f64> = coarse.iter().map(|&z| h.lat().log_density(&prior, &[z]).unwrap().exp()).collect();
    let px: Vec<f64> = coarse
        .iter()
        .map(|&x| trapezoid(&nodes.iter().map(|&z| log_joint(&h, &[x], &[z]).exp()).collect::<Vec<_>>(), hf))
        .collect();
    let px = normalize_grid(&px, hc);
    let qx: Vec<f64> = coarse.iter().map(|&x| h.observable_log_density(&c, &[x]).unwrap().exp()).collect();
    worst = worst.max(total_variation(&pz, &qz, hc)).max(total_variation(&px, &qx, hc));

    within(start, Duration::from_secs(60))?;
    check(worst < 1e-3, format!("worst TV/sup error {worst:.2e}"))
}

// 3
fn posterior_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    let update = |h: &Harmonium, c: &Conjugation, x: &[f64]| {
        let lik = ConjugatedLikelihood::from_harmonium(h, c).unwrap();
        bayes_update(&h.prior_params(c).unwrap(), &lik, x).unwrap()
    };

    // mixtures and Gaussian-Boltzmann: enumerate the latent states
    for _ in 0..5 {
        let (h, c) = random_mixture(random_obs_family(&mut r), 3, &mut r);
        let (hb, cb) = random_gaussian_boltzmann(2, 4, &mut r);
        for (h, c) in [(h, c), (hb, cb)] {
            let prior = h.prior_params(&c).unwrap();
            for x in samples(&h, &c, 5, r.random()) {
                let zs = h.lat().support().unwrap();
                let oracle = normalize(
                    &zs.iter()
                        .map(|z| {
                            (h.lat().log_density(&prior, z).unwrap()
                                + h.obs().log_density(&h.likelihood_params(z).unwrap(), &x).unwrap())
                            .exp()
                        })
                        .collect::<Vec<_>>(),
                );
                let post = update(&h, &c, &x);
                let q: Vec<f64> = zs.iter().map(|z| h.lat().log_density(&post, z).unwrap().exp()).collect();
                worst = worst.max(tv_discrete(&oracle, &q));
            }
        }
    }

    // linear Gaussian with normal latent: grid over z
    let zs = grid(-30.0, 30.0, 10_000);
    let step = zs[1] - zs[0];
    for _ in 0..5 {
        let (h, c) = random_lgm(2, 1, &mut r);
        let prior = h.prior_params(&c).unwrap();
        for x in samples(&h, &c, 3, r.random()) {
            let oracle: Vec<f64> = zs
                .iter()
                .map(|&z| {
                    (h.lat().log_density(&prior, &[z]).unwrap()
                        + h.obs().log_density(&h.likelihood_params(&[z]).unwrap(), &x).unwrap())
                    .exp()
                })
                .collect();
            let post = update(&h, &c, &x);
            let q: Vec<f64> = zs.iter().map(|&z| h.lat().log_density(&post, &[z]).unwrap().exp()).collect();
            worst = worst.max(total_variation(&normalize_grid(&oracle, step), &q, step));
        }
    }

    // Bayes estimation: grid over the natural parameter, both sides normalized numerically
    let thetas = grid(-12.0, 8.0, 10_000);
    let step = thetas[1] - thetas[0];
    for (base, prior, xs) in [
        (Family::PoissonProduct { neurons: 1 }, [3.0, -2.0], vec![0.0, 4.0, 9.0]),
        (Family::Categorical { states: 1 }, [1.5, -4.0], vec![0.0, 1.0]),
    ] {
        let (h, c) = bayes_estimation_harmonium(base.clone()).unwrap();
        let h = Harmonium::new(h.obs().clone(), h.lat().clone(), h.obs_bias().clone(), DVector::from_row_slice(&prior) - &c.rho, h.interaction().clone())
            .unwrap();
        let density = |nat: &DVector<f64>| {
            normalize_grid(
                &thetas.iter().map(|&t| h.lat().unnormalized_log_density(nat, &[t]).unwrap().exp()).collect::<Vec<_>>(),
                step,
            )
        };
        let prior_density = density(&h.prior_params(&c).unwrap());
        for x in xs {
            let lik: Vec<f64> = thetas.iter().map(|&t| base.log_density(&DVector::from_element(1, t), &[x]).unwrap().exp()).collect();
            let oracle: Vec<f64> = prior_density.iter().zip(&lik).map(|(p, l)| p * l).collect();
            let q = density(&update(&h, &c, &[x]));
            worst = worst.max(total_variation(&normalize_grid(&oracle, step), &q, step));
        }
    }

    // Dirichlet-categorical: a Beta on a fine grid
    let ws = grid(0.0, 1.0, 10_001);
    let step = ws[1] - ws[0];
    let (h, c) = dirichlet_categorical_harmonium(1, DVector::from_vec(vec![2.0, 1.5])).unwrap();
    let prior = h.prior_params(&c).unwrap();
    let beta = |nat: &DVector<f64>, w: f64| {
        if w <= 0.0 || w >= 1.0 {
            0.0
        } else {
            h.lat().log_density(nat, &[1.0 - w, w]).unwrap().exp()
        }
    };
    for x in [0usize, 1] {
        let oracle: Vec<f64> = ws.iter().map(|&w| beta(&prior, w) * if x == 1 { w } else { 1.0 - w }).collect();
        let post = update(&h, &c, &[x as f64]);
        let q: Vec<f64> = ws.iter().map(|&w| beta(&post, w)).collect();
        worst = worst.max(total_variation(&normalize_grid(&oracle, step), &q, step));
    }

    // concentration of the Dirichlet posterior over 10, 20, 30 observations
    let (h, c) = dirichlet_model().unwrap();
    let truth = DVector::from_row_slice(&DIRICHLET_TRUE_WEIGHTS);
    let decreasing = (0..20u64)
        .filter(|&seed| {
            let data = generate_dataset(Scenario::DirichletInference, seed).unwrap();
            let err: Vec<f64> = [10, 20, 30]
                .iter()
                .map(|&n| (dirichlet_mean(&dirichlet_posterior(&h, &c, &data, n).unwrap()) - &truth).abs().sum())
                .collect();
            err[0] > err[1] && err[1] > err[2]
        })
        .count();
    check(
        worst < 1e-3 && decreasing >= 18,
        format!("worst posterior TV {worst:.2e}; Dirichlet error decreasing for {decreasing}/20 seeds"),
    )
}

// 4
fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(4);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for class in [ModelClass::Mixture, ModelClass::LinearGaussian] {
        for i in 0..5 {
            let obs = random_obs_family(&mut r);
            let draw = |r: &mut ChaCha8Rng| match class {
                ModelClass::Mixture => random_mixture(obs.clone(), 3, r),
                _ if i % 2 == 0 => random_lgm(2, 2, r),
                _ => random_gaussian_boltzmann(2, 3, r),
            };
            let (truth, tc) = draw(&mut r);
            let data = samples(&truth, &tc, 30, r.random());
            let (h, _) = draw(&mut r);
            let grad = ce_gradient(&h, class, &data).unwrap();
            let mask = class.parameter_mask(h.obs(), h.lat());
            let v = h.to_vector();
            let objective = |v: &DVector<f64>| {
                let h = h.with_vector(v).unwrap();
                cross_entropy(&h, &class.conjugation(&h).unwrap(), &data).unwrap()
            };
            for k in (0..v.len()).filter(|&k| mask[k] != 0.0) {
                let step = 1e-5 * v[k].abs().max(1.0);
                let (mut up, mut down) = (v.clone(), v.clone());
                up[k] += step;
                down[k] -= step;
                let fd = (objective(&up) - objective(&down)) / (2.0 * step);
                worst = worst.max((fd - grad[k]).abs() / grad[k].abs().max(1e-3));
                checked += 1;
            }
        }
    }
    within(start, Duration::from_secs(60))?;
    check(worst < 1e-4, format!("worst relative error {worst:.2e} over {checked} parameters"))
}

// 5
fn em_monotone_and_m_step() -> Outcome {
    let mut r = rng(5);
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_grad = 0.0f64;
    for case in 0..6 {
        let (truth, tc) = match case {
            0 => random_mixture(Family::MultivariateNormal { dim: 2 }, 3, &mut r),
            1 => random_mixture(Family::VonMisesProduct { dim: 2 }, 3, &mut r),
            2 => random_mixture(Family::PoissonProduct { neurons: 3 }, 2, &mut r),
            3 => random_mixture(Family::Boltzmann { neurons: 4 }, 3, &mut r),
            4 => random_lgm(3, 1, &mut r),
            _ => random_lgm(4, 2, &mut r),
        };
        let class = ModelClass::of(truth.obs(), truth.lat()).unwrap();
        let data = samples(&truth, &tc, 200, r.random());
        let h0 = initialize_from_data(truth.obs(), truth.lat(), &data, &mut r).unwrap();
        let cfg = TrainConfig { algorithm: Algorithm::Em, epochs: 50, ..Default::default() };
        let trace = fit(&h0, &data, &cfg).map_err(|e| e.to_string())?;
        for pair in trace.cross_entropy.windows(2) {
            worst_rise = worst_rise.max(pair[1] - pair[0]);
        }
        let target = e_step(&h0, &data).unwrap();
        let (h, c) = m_step_exact(truth.obs(), truth.lat(), &target).map_err(|e| e.to_string())?;
        worst_grad = worst_grad.max(gradient_against(&h, &c, class, &target).unwrap().amax());
    }
    check(
        worst_rise <= 1e-9 && worst_grad < 1e-6,
        format!("largest EM step increase {worst_rise:.2e}; M-step gradient max-norm {worst_grad:.2e}"),
    )
}

// 6
fn von_mises_algorithms() -> Outcome {
    let start = Instant::now();
    let run = vonmises_training(experiments::DEFAULT_SEED, 500, 3).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(300))?;
    let gaps: Vec<String> = run
        .runs
        .iter()
        .map(|(a, t)| format!("{a} {:+.3}", t.final_cross_entropy() - run.ground_truth_cross_entropy))
        .collect();
    let ok = run.runs.iter().all(|(_, t)| (t.final_cross_entropy() - run.ground_truth_cross_entropy).abs() < 0.1);
    check(ok, format!("final minus ground-truth cross-entropy: {}", gaps.join(", ")))
}

// 7
fn gaussian_boltzmann_circles() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = experiments::run_scenario(&ScenarioConfig::new(Scenario::GaussianBoltzmann, dir.path()))
        .map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(300))?;
    let gain = report.metric("improvement_nats").unwrap();
    let integral = report.metric("density_integral").unwrap();
    check(
        gain >= 0.2 && (integral - 1.0).abs() < 1e-2,
        format!("held-out gain over single normal {gain:.3} nats; density integral {integral:.5}"),
    )
}

// 8
fn population_code() -> Outcome {
    let code = PopulationCode::new(8).map_err(|e| e.to_string())?;
    let ratio = code.residual / code.conjugation.chi.abs();
    let angles = circle_grid(2001);
    let step = angles[1] - angles[0];
    let trials = experiments::population_trials(&code, 50, &mut rng(8)).unwrap();
    let mut worst = 0.0f64;
    for (_, n) in &trials {
        let d = code.decoded_posterior(n, &angles).unwrap();
        let e = code.grid_posterior(n, &angles).unwrap();
        worst = worst.max(total_variation(&d, &e, step));
    }
    check(ratio < 0.01 && worst < 1e-3, format!("residual/chi {ratio:.2e}; worst posterior TV {worst:.2e} over 50 trials"))
}

// 9
fn com_fano_factors() -> Outcome {
    let run = com_training(experiments::DEFAULT_SEED, 1000, 3).map_err(|e| e.to_string())?;
    let rel = run
        .sample_fano
        .iter()
        .zip(&run.model_fano)
        .map(|(s, m)| (m - s).abs() / s)
        .fold(0.0, f64::max);
    let under = run.sample_fano.iter().any(|&f| f < 1.0);
    let model_under = run.model_fano.iter().any(|&f| f < 1.0);
    let fmt = |v: &[f64]| v.iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>().join(" ");
    check(
        rel < 0.15 && under && model_under,
        format!(
            "sample FF [{}], model FF [{}], worst relative gap {rel:.3}",
            fmt(&run.sample_fano),
            fmt(&run.model_fano)
        ),
    )
}

// 10
fn isotropic_latent_fails() -> Outcome {
    let mut r = rng(10);
    let (n, m) = (3, 2);
    let obs = Family::MultivariateNormal { dim: n };
    let mut best = f64::INFINITY;
    for _ in 0..10 {
        let theta_x = obs.random_natural(&mut r, 1.0);
        // latent statistic (z, |z|^2); interactions couple x with z only
        let mut interaction = DMatrix::zeros(obs.dimension(), m + 1);
        for i in 0..n {
            for j in 0..m {
                interaction[(i, j)] = gauss(&mut r);
            }
        }
        let stats: Vec<DVector<f64>> = (0..200)
            .map(|_| {
                let z = DVector::from_fn(m, |_, _| 2.0 * gauss(&mut r));
                let mut s = DVector::zeros(m + 1);
                s.rows_mut(0, m).copy_from(&z);
                s[m] = z.norm_squared();
                s
            })
            .collect();
        let (_, residual) = fit_affine(&obs, &theta_x, &interaction, &stats).map_err(|e| e.to_string())?;
        best = best.min(residual);
    }
    check(best > 1e-3, format!("smallest fit residual over 10 random models {best:.3}"))
}

// 11
fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_harmonium-cli");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |scenario: Scenario, out: &Path| -> Result<(), String> {
        let status = Command::new(exe)
            .args(["run", "--scenario", scenario.name(), "--seed", "42", "--out"])
            .arg(out)
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if status.success() {
            Ok(())
        } else {
            Err(format!("{scenario} exited with {status}"))
        }
    };
    let mut compared = 0;
    for scenario in Scenario::ALL {
        let (a, b) = (dir.path().join(format!("{scenario}-a")), dir.path().join(format!("{scenario}-b")));
        run(scenario, &a)?;
        run(scenario, &b)?;
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in names {
            let (x, y) = (std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
            if x != y {
                return Err(format!("{scenario}: {} differs between runs", name.to_string_lossy()));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} files identical across two runs of every scenario"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("conjugation exactness", conjugation_exactness),
        ("marginalization oracle", marginalization_oracle),
        ("posterior oracle", posterior_oracle),
        ("gradient correctness", gradient_correctness),
        ("EM monotonicity and M-step optimality", em_monotone_and_m_step),
        ("von Mises mixture training algorithms", von_mises_algorithms),
        ("Gaussian-Boltzmann on two circles", gaussian_boltzmann_circles),
        ("population code", population_code),
        ("CoM-Poisson mixture Fano factors", com_fano_factors),
        ("isotropic normal latent is not conjugate", isotropic_latent_fails),
        ("scenario determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:2} PASS  {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:2} FAIL  {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
