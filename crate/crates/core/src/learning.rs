//! Maximum-likelihood training of conjugated harmoniums.
//!
//! The cross-entropy `-mean log q_X(x)` has gradient
//!
//! ```text
//! grad = tau_XZ(theta) - mean_i E[s_XZ | x_i],
//! ```
//!
//! model expectations minus conditional (data) expectations. [`Algorithm`]
//! selects how each term is obtained: exactly, frozen between E-step
//! refreshes, or by Monte Carlo.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugation::{
    categorical_conjugation, interaction_mask, linear_gaussian_conjugation, lgm_from_moments, mean_block,
    mixture_from_components,
};
use crate::error::{check_len, domain, Error, Result};
use crate::exfam::{categorical, normal, Family, Observation};
use crate::harmonium::{Conjugation, Harmonium};

/// Model classes with closed-form conjugation and model expectations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelClass {
    /// Categorical latent, any observable.
    Mixture,
    /// Normal observable, normal or Boltzmann latent, interactions restricted
    /// to the block pairing `x` with the first-order latent statistic.
    LinearGaussian,
}

impl ModelClass {
    pub fn of(obs: &Family, lat: &Family) -> Result<Self> {
        match (obs, lat) {
            (_, Family::Categorical { .. }) => Ok(ModelClass::Mixture),
            (Family::MultivariateNormal { .. }, Family::MultivariateNormal { .. } | Family::Boltzmann { .. }) => {
                Ok(ModelClass::LinearGaussian)
            }
            _ => Err(Error::Unsupported(format!("no trainable model class for {obs:?} over {lat:?}"))),
        }
    }

    pub fn conjugation(self, h: &Harmonium) -> Result<Conjugation> {
        match self {
            ModelClass::Mixture => categorical_conjugation(h),
            ModelClass::LinearGaussian => linear_gaussian_conjugation(h),
        }
    }

    /// Indicator over the full parameter vector of the coordinates this
    /// class lets vary.
    pub fn parameter_mask(self, obs: &Family, lat: &Family) -> DVector<f64> {
        let (dx, dz) = (obs.dimension(), lat.dimension());
        let mut mask = DVector::from_element(dx + dz + dx * dz, 1.0);
        if let (ModelClass::LinearGaussian, Some(m)) = (self, interaction_mask(obs, lat)) {
            for i in 0..dx {
                for j in 0..dz {
                    mask[dx + dz + i * dz + j] = m[(i, j)];
                }
            }
        }
        mask
    }
}

/// Averaged harmonium statistics `(s_X, s_Z, s_X s_Z^T)` or their expectations.
#[derive(Clone, Debug, PartialEq)]
pub struct Statistics {
    pub obs: DVector<f64>,
    pub lat: DVector<f64>,
    pub cross: DMatrix<f64>,
}

impl Statistics {
    pub fn zeros(dx: usize, dz: usize) -> Self {
        Statistics { obs: DVector::zeros(dx), lat: DVector::zeros(dz), cross: DMatrix::zeros(dx, dz) }
    }

    pub fn from_pair(s_x: DVector<f64>, s_z: DVector<f64>) -> Self {
        let cross = &s_x * s_z.transpose();
        Statistics { obs: s_x, lat: s_z, cross }
    }

    fn add_assign(&mut self, other: &Statistics) {
        self.obs += &other.obs;
        self.lat += &other.lat;
        self.cross += &other.cross;
    }

    fn scale(mut self, k: f64) -> Self {
        self.obs *= k;
        self.lat *= k;
        self.cross *= k;
        self
    }

    /// Mean of a sequence, accumulated in order.
    pub fn mean(items: &[Statistics]) -> Result<Self> {
        let first = items.first().ok_or_else(|| domain("cannot average an empty set of statistics"))?;
        let mut acc = Statistics::zeros(first.obs.len(), first.lat.len());
        for s in items {
            acc.add_assign(s);
        }
        Ok(acc.scale(1.0 / items.len() as f64))
    }

    /// Same layout as [`Harmonium::to_vector`].
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.obs.len() + self.lat.len() + self.cross.len());
        v.extend_from_slice(self.obs.as_slice());
        v.extend_from_slice(self.lat.as_slice());
        for row in self.cross.row_iter() {
            v.extend(row.iter());
        }
        DVector::from_vec(v)
    }
}

/// Mean of `-log q_X(x)` over the data.
pub fn cross_entropy(h: &Harmonium, c: &Conjugation, data: &[Observation]) -> Result<f64> {
    if data.is_empty() {
        return Err(domain("cross-entropy of an empty dataset"));
    }
    let norm = h.joint_log_partition(c)?;
    let terms = data.par_iter().map(|x| h.observable_log_density_with(norm, x)).collect::<Result<Vec<f64>>>()?;
    Ok(-terms.iter().sum::<f64>() / data.len() as f64)
}

/// Mean conditional expectations over the data.
pub fn e_step(h: &Harmonium, data: &[Observation]) -> Result<Statistics> {
    let parts = conditional_statistics(h, data)?;
    Statistics::mean(&parts)
}

fn conditional_statistics(h: &Harmonium, data: &[Observation]) -> Result<Vec<Statistics>> {
    data.par_iter()
        .map(|x| {
            let (s_x, eta_z, cross) = h.conditional_expectations(x)?;
            Ok(Statistics { obs: s_x, lat: eta_z, cross })
        })
        .collect()
}

/// Exact model expectations `tau_XZ(theta)`. For the linear-Gaussian class,
/// entries of the cross block outside the mean block are left at zero.
pub fn model_expectations(h: &Harmonium, c: &Conjugation, class: ModelClass) -> Result<Statistics> {
    let prior = h.prior_params(c)?;
    let eta_z = h.lat().to_mean(&prior)?;
    match class {
        ModelClass::Mixture => {
            let weights = categorical::weights(&prior);
            let mut stats = Statistics::zeros(h.obs().dimension(), h.lat().dimension());
            stats.lat = eta_z;
            for (k, w) in weights.iter().enumerate() {
                let theta = if k == 0 { h.obs_bias().clone() } else { h.obs_bias() + h.interaction().column(k - 1) };
                let eta = h.obs().to_mean(&theta)?;
                stats.obs.axpy(*w, &eta, 1.0);
                if k > 0 {
                    stats.cross.set_column(k - 1, &(eta * *w));
                }
            }
            Ok(stats)
        }
        ModelClass::LinearGaussian => {
            let w = mean_block(h.obs(), h.lat(), h.interaction())?;
            let (n, m) = w.shape();
            let (ez, ezz) = latent_moments(h.lat(), m, &eta_z);
            let (lin, sym) = normal::unpack(n, h.obs_bias().as_slice());
            let chol = (sym * -2.0).cholesky().ok_or_else(|| domain("observable precision is not positive definite"))?;
            let cov = chol.inverse();
            let a = &cov * lin;
            let b = &cov * w;
            let bez = &b * &ez;
            let ex = &a + &bez;
            let exx = &cov + &a * a.transpose() + &a * bez.transpose() + &bez * a.transpose() + &b * &ezz * b.transpose();
            let exz = &a * ez.transpose() + &b * &ezz;
            let mut cross = DMatrix::zeros(h.obs().dimension(), h.lat().dimension());
            cross.view_mut((0, 0), (n, m)).copy_from(&exz);
            Ok(Statistics { obs: normal::pack_moments(&ex, &exx), lat: eta_z, cross })
        }
    }
}

/// `(E[z], E[z z^T])` from latent mean parameters.
pub(crate) fn latent_moments(lat: &Family, m: usize, eta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    match lat {
        Family::Boltzmann { .. } => {
            let ez = eta.rows(0, m).into_owned();
            let mut ezz = DMatrix::from_diagonal(&ez);
            let mut k = m;
            for i in 0..m {
                for j in i + 1..m {
                    ezz[(i, j)] = eta[k];
                    ezz[(j, i)] = eta[k];
                    k += 1;
                }
            }
            (ez, ezz)
        }
        _ => normal::unpack_moments(m, eta.as_slice()),
    }
}

/// Gradient of the cross-entropy with respect to [`Harmonium::to_vector`],
/// with coordinates fixed by the model class set to zero.
pub fn ce_gradient(h: &Harmonium, class: ModelClass, data: &[Observation]) -> Result<DVector<f64>> {
    let c = class.conjugation(h)?;
    let target = e_step(h, data)?;
    gradient_against(h, &c, class, &target)
}

/// `tau_XZ(theta)` minus the target statistics, masked by class.
pub fn gradient_against(h: &Harmonium, c: &Conjugation, class: ModelClass, target: &Statistics) -> Result<DVector<f64>> {
    let model = model_expectations(h, c, class)?;
    let mask = class.parameter_mask(h.obs(), h.lat());
    Ok((model.to_vector() - target.to_vector()).component_mul(&mask))
}

/// Exact M-step: the parameters whose model expectations equal `target`.
pub fn m_step_exact(obs: &Family, lat: &Family, target: &Statistics) -> Result<(Harmonium, Conjugation)> {
    check_len(obs.dimension(), target.obs.len())?;
    check_len(lat.dimension(), target.lat.len())?;
    match (ModelClass::of(obs, lat)?, lat) {
        (ModelClass::Mixture, _) => mixture_m_step(obs, target),
        (ModelClass::LinearGaussian, Family::MultivariateNormal { dim: m }) => lgm_m_step(obs, *m, target),
        _ => Err(Error::Unsupported(format!("no closed-form M-step for {obs:?} over {lat:?}; use a gradient method"))),
    }
}

fn mixture_m_step(obs: &Family, target: &Statistics) -> Result<(Harmonium, Conjugation)> {
    let k = target.lat.len();
    let w0 = 1.0 - target.lat.sum();
    let weights: Vec<f64> = std::iter::once(w0).chain(target.lat.iter().copied()).collect();
    if weights.iter().any(|&w| w < 1e-12) {
        return Err(domain("mixture component has (near) zero responsibility"));
    }
    let mut rest = target.obs.clone();
    let mut components = vec![DVector::zeros(0); k + 1];
    for j in 0..k {
        let col = target.cross.column(j);
        rest -= col;
        components[j + 1] = obs.to_natural(&(col / weights[j + 1]))?;
    }
    components[0] = obs.to_natural(&(rest / w0))?;
    mixture_from_components(obs.clone(), &weights, &components)
}

fn lgm_m_step(obs: &Family, m: usize, target: &Statistics) -> Result<(Harmonium, Conjugation)> {
    let n = match obs {
        Family::MultivariateNormal { dim } => *dim,
        _ => unreachable!("checked by model class"),
    };
    let (ex, exx) = normal::unpack_moments(n, target.obs.as_slice());
    let (ez, ezz) = normal::unpack_moments(m, target.lat.as_slice());
    let exz = target.cross.view((0, 0), (n, m)).into_owned();
    let cov_z = &ezz - &ez * ez.transpose();
    let cov_xz = &exz - &ex * ez.transpose();
    let cov_x = &exx - &ex * ex.transpose();
    let prec_z = cov_z.clone().cholesky().ok_or_else(|| domain("latent second moments are degenerate"))?.inverse();
    let loading = &cov_xz * &prec_z;
    let mean_x = &ex - &loading * &ez;
    let noise = &cov_x - &loading * cov_xz.transpose();
    let noise = (&noise + noise.transpose()) * 0.5;
    lgm_from_moments(&mean_x, &noise, &loading, &ez, &cov_z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Em,
    CeGd,
    EmGd,
    CeMcgd,
    EmMcgd,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Algorithm::Em),
            "ce-gd" => Ok(Algorithm::CeGd),
            "em-gd" => Ok(Algorithm::EmGd),
            "ce-mcgd" => Ok(Algorithm::CeMcgd),
            "em-mcgd" => Ok(Algorithm::EmMcgd),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Em => "em",
            Algorithm::CeGd => "ce-gd",
            Algorithm::EmGd => "em-gd",
            Algorithm::CeMcgd => "ce-mcgd",
            Algorithm::EmMcgd => "em-mcgd",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    /// Model draws per Monte Carlo gradient.
    pub mc_model_samples: usize,
    /// Posterior draws per datum per Monte Carlo gradient.
    pub mc_conditional_samples: usize,
    pub estep_refresh_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::CeGd,
            epochs: 500,
            learning_rate: 3e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 10,
            mc_model_samples: 10,
            mc_conditional_samples: 1,
            estep_refresh_epochs: 100,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        TrainConfig { algorithm, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} is out of range")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) {
            return bad("adam_beta1");
        }
        if !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam_beta2");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps");
        }
        if self.batch_size == 0 || self.mc_model_samples == 0 || self.mc_conditional_samples == 0 {
            return bad("batch and sample counts");
        }
        if self.estep_refresh_epochs == 0 {
            return bad("estep_refresh_epochs");
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct FitTrace {
    /// Cross-entropy before training, then after each epoch.
    pub cross_entropy: Vec<f64>,
    pub model: Harmonium,
    pub conjugation: Conjugation,
    /// Epoch at which the cross-entropy became non-finite, if it did.
    pub diverged_at: Option<usize>,
}

impl FitTrace {
    pub fn final_cross_entropy(&self) -> f64 {
        *self.cross_entropy.last().expect("trace holds the initial value")
    }

    /// `epoch,cross_entropy` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,cross_entropy\n");
        for (epoch, ce) in self.cross_entropy.iter().enumerate() {
            out.push_str(&format!("{epoch},{ce}\n"));
        }
        out
    }
}

/// A linear subspace `theta = A^T theta'` of the full parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    a: DMatrix<f64>,
}

impl Subspace {
    /// `a` has one row per restricted coordinate and one column per full
    /// parameter; it must have full row rank.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() > a.ncols() {
            return Err(domain("subspace embedding needs at least as many columns as rows"));
        }
        let sv = a.singular_values();
        let tol = sv.max() * 1e-12 * a.ncols() as f64;
        if a.nrows() == 0 || sv.iter().filter(|&&s| s > tol).count() < a.nrows() {
            return Err(domain("subspace embedding is rank deficient"));
        }
        Ok(Subspace { a })
    }

    pub fn identity(dim: usize) -> Self {
        Subspace { a: DMatrix::identity(dim, dim) }
    }

    /// Embedding that keeps only the full-space coordinates listed in `keep`.
    pub fn selection(full_dim: usize, keep: &[usize]) -> Result<Self> {
        let mut a = DMatrix::zeros(keep.len(), full_dim);
        for (r, &c) in keep.iter().enumerate() {
            if c >= full_dim {
                return Err(Error::Shape { expected: full_dim, got: c });
            }
            a[(r, c)] = 1.0;
        }
        Self::new(a)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn embed(&self, restricted: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(restricted)
    }

    /// Restricted gradient `A grad`.
    pub fn pull_gradient(&self, full: &DVector<f64>) -> DVector<f64> {
        &self.a * full
    }

    /// Least-squares restricted coordinates of a full parameter vector.
    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        let gram = &self.a * self.a.transpose();
        gram.cholesky().expect("full row rank").solve(&(&self.a * full))
    }
}

struct Adam {
    m: DVector<f64>,
    v: DVector<f64>,
    t: i32,
    rate: f64,
    b1: f64,
    b2: f64,
    eps: f64,
}

impl Adam {
    fn new(dim: usize, cfg: &TrainConfig) -> Self {
        Adam {
            m: DVector::zeros(dim),
            v: DVector::zeros(dim),
            t: 0,
            rate: cfg.learning_rate,
            b1: cfg.adam_beta1,
            b2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        }
    }

    fn step(&mut self, params: &mut DVector<f64>, grad: &DVector<f64>) {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * grad[i];
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * grad[i] * grad[i];
            params[i] -= self.rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Random starting parameters: biases `N(0, 0.1^2)`, free interactions
/// `N(0, 0.01^2)`, normal second-order biases at `-I/2`, CoM-Poisson shape
/// biases near `-1`.
pub fn initialize<R: Rng + ?Sized>(obs: &Family, lat: &Family, rng: &mut R) -> Result<Harmonium> {
    initialize_scaled(obs, lat, 0.01, rng)
}

/// [`initialize`] with interactions drawn from `N(0, interaction_sd^2)`.
pub fn initialize_scaled<R: Rng + ?Sized>(
    obs: &Family,
    lat: &Family,
    interaction_sd: f64,
    rng: &mut R,
) -> Result<Harmonium> {
    if !(interaction_sd >= 0.0 && interaction_sd.is_finite()) {
        return Err(Error::Config("interaction_sd must be finite and non-negative".into()));
    }
    let class = ModelClass::of(obs, lat)?;
    let bias = Normal::new(0.0, 0.1).expect("valid");
    let inter = Normal::new(0.0, interaction_sd).expect("valid");
    let draw_bias = |f: &Family, rng: &mut R| -> DVector<f64> {
        let mut theta = DVector::from_fn(f.dimension(), |_, _| bias.sample(rng));
        match f {
            Family::MultivariateNormal { dim } => {
                let lin = theta.rows(0, *dim).into_owned();
                theta = normal::pack(&lin, &(DMatrix::identity(*dim, *dim) * -0.5));
            }
            Family::CoMPoissonProduct { .. } => {
                for j in (1..theta.len()).step_by(2) {
                    theta[j] -= 1.0;
                }
            }
            _ => {}
        }
        theta
    };
    let obs_bias = draw_bias(obs, rng);
    let lat_bias = draw_bias(lat, rng);
    let mut interaction = DMatrix::from_fn(obs.dimension(), lat.dimension(), |_, _| inter.sample(rng));
    if let (ModelClass::LinearGaussian, Some(mask)) = (class, interaction_mask(obs, lat)) {
        interaction.component_mul_assign(&mask);
    }
    if class == ModelClass::Mixture {
        for j in 0..lat.dimension() {
            let mut comp = &obs_bias + interaction.column(j);
            if obs.project_natural(&mut comp) {
                interaction.set_column(j, &(comp - &obs_bias));
            }
        }
    }
    Harmonium::new(obs.clone(), lat.clone(), obs_bias, lat_bias, interaction)
}

/// Mixture starting point from the data: k-means++ seeding and Lloyd
/// iterations on standardized sufficient statistics, then one exact M-step on
/// hard assignments softened toward uniform. Other model classes fall back
/// to [`initialize`].
pub fn initialize_from_data<R: Rng + ?Sized>(
    obs: &Family,
    lat: &Family,
    data: &[Observation],
    rng: &mut R,
) -> Result<Harmonium> {
    let k = match (ModelClass::of(obs, lat)?, lat) {
        (ModelClass::Mixture, Family::Categorical { states }) => states + 1,
        _ => return initialize(obs, lat, rng),
    };
    if data.len() < k {
        return Err(domain("fewer data points than mixture components"));
    }
    let stats = data.iter().map(|x| obs.sufficient_statistic(x)).collect::<Result<Vec<_>>>()?;
    let n = stats.len() as f64;
    let mean = stats.iter().fold(DVector::zeros(obs.dimension()), |a, s| a + s) / n;
    let sd = stats
        .iter()
        .fold(DVector::zeros(obs.dimension()), |a, s| a + (s - &mean).map(|d| d * d))
        .map(|v| (v / n).sqrt().max(1e-12));
    let points: Vec<DVector<f64>> = stats.iter().map(|s| (s - &mean).component_div(&sd)).collect();
    let dist = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm_squared();

    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let d: Vec<f64> =
            points.iter().map(|p| centers.iter().map(|c| dist(p, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            categorical::inverse_cdf(&d.iter().map(|v| v / total).collect::<Vec<_>>(), rng.random::<f64>())
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].clone());
    }
    let nearest = |p: &DVector<f64>, centers: &[DVector<f64>]| {
        (0..k).min_by(|&a, &b| dist(p, &centers[a]).total_cmp(&dist(p, &centers[b]))).expect("k > 0")
    };
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..50 {
        for (j, c) in centers.iter_mut().enumerate() {
            let members: Vec<&DVector<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(p, _)| p).collect();
            if !members.is_empty() {
                *c = members.iter().fold(DVector::zeros(c.len()), |a, p| a + *p) / members.len() as f64;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }

    let soft = 0.1 / k as f64;
    let parts: Vec<Statistics> = stats
        .into_iter()
        .zip(&labels)
        .map(|(s_x, &l)| {
            let r = DVector::from_fn(k - 1, |j, _| if j + 1 == l { 0.9 + soft } else { soft });
            Statistics::from_pair(s_x, r)
        })
        .collect();
    let (h, _) = m_step_exact(obs, lat, &Statistics::mean(&parts)?)?;
    Ok(h)
}

/// Pulls parameters back into the domain where every likelihood and the
/// prior are valid densities. Returns the model and whether it changed.
fn project_parameters(h: &Harmonium, class: ModelClass, v: &DVector<f64>) -> Result<(Harmonium, bool)> {
    let (obs, lat) = (h.obs(), h.lat());
    let (dx, dz) = (obs.dimension(), lat.dimension());
    let mut obs_bias = v.rows(0, dx).into_owned();
    let mut lat_bias = v.rows(dx, dz).into_owned();
    let mut interaction = DMatrix::from_row_slice(dx, dz, &v.as_slice()[dx + dz..]);
    let mut changed = obs.project_natural(&mut obs_bias);
    if class == ModelClass::Mixture {
        for j in 0..dz {
            let mut comp = &obs_bias + interaction.column(j);
            if obs.project_natural(&mut comp) {
                interaction.set_column(j, &(comp - &obs_bias));
                changed = true;
            }
        }
    }
    let draft = Harmonium::new(obs.clone(), lat.clone(), obs_bias.clone(), lat_bias.clone(), interaction.clone())?;
    let c = class.conjugation(&draft)?;
    let mut prior = &lat_bias + &c.rho;
    if lat.project_natural(&mut prior) {
        lat_bias = prior - &c.rho;
        changed = true;
        return Ok((Harmonium::new(obs.clone(), lat.clone(), obs_bias, lat_bias, interaction)?, changed));
    }
    Ok((draft, changed))
}

/// Monte Carlo estimate of the model expectations from `count` joint draws.
fn sampled_model_statistics<R: Rng + ?Sized>(
    h: &Harmonium,
    c: &Conjugation,
    count: usize,
    rng: &mut R,
) -> Result<Statistics> {
    let draws = h.sample_joint(c, rng, count)?;
    let parts = draws
        .iter()
        .map(|(x, z)| Ok(Statistics::from_pair(h.obs().sufficient_statistic(x)?, h.lat().sufficient_statistic(z)?)))
        .collect::<Result<Vec<_>>>()?;
    Statistics::mean(&parts)
}

/// Monte Carlo estimate of the data expectations: `per_datum` posterior draws for each datum.
fn sampled_data_statistics<R: Rng + ?Sized>(
    h: &Harmonium,
    batch: &[&Observation],
    per_datum: usize,
    rng: &mut R,
) -> Result<Statistics> {
    let mut parts = Vec::with_capacity(batch.len() * per_datum);
    for x in batch {
        let s_x = h.obs().sufficient_statistic(x)?;
        let post = h.posterior_from_statistic(&s_x);
        for z in h.lat().sample(&post, rng, per_datum)? {
            parts.push(Statistics::from_pair(s_x.clone(), h.lat().sufficient_statistic(&z)?));
        }
    }
    Statistics::mean(&parts)
}

/// Trains `h0` on `data` in the full parameter space.
pub fn fit(h0: &Harmonium, data: &[Observation], config: &TrainConfig) -> Result<FitTrace> {
    run(h0, None, data, config)
}

/// Trains within the subspace `theta = A^T theta'`, starting from the
/// least-squares restriction of `h0`.
pub fn subspace_fit(h0: &Harmonium, subspace: &Subspace, data: &[Observation], config: &TrainConfig) -> Result<FitTrace> {
    check_len(h0.parameter_len(), subspace.matrix().ncols())?;
    if config.algorithm == Algorithm::Em {
        return Err(Error::Config("EM cannot be restricted to a subspace; use a gradient algorithm".into()));
    }
    run(h0, Some(subspace), data, config)
}

fn run(h0: &Harmonium, subspace: Option<&Subspace>, data: &[Observation], config: &TrainConfig) -> Result<FitTrace> {
    config.validate()?;
    let class = ModelClass::of(h0.obs(), h0.lat())?;
    if data.is_empty() {
        return Err(domain("cannot train on an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut h = h0.clone();
    let mut c = class.conjugation(&h)?;
    let mut trace = vec![cross_entropy(&h, &c, data)?];
    let finish = |h: Harmonium, c: Conjugation, trace: Vec<f64>, diverged_at| {
        Ok(FitTrace { cross_entropy: trace, model: h, conjugation: c, diverged_at })
    };

    if config.algorithm == Algorithm::Em {
        for epoch in 1..=config.epochs {
            let target = e_step(&h, data)?;
            (h, c) = m_step_exact(h.obs(), h.lat(), &target)?;
            let ce = cross_entropy(&h, &c, data)?;
            trace.push(ce);
            if !ce.is_finite() {
                return finish(h, c, trace, Some(epoch));
            }
        }
        return finish(h, c, trace, None);
    }

    let full = h.to_vector();
    let mut params = match subspace {
        Some(s) => s.restrict(&full),
        None => full,
    };
    let mut adam = Adam::new(params.len(), config);
    let embed = |p: &DVector<f64>| match subspace {
        Some(s) => s.embed(p),
        None => p.clone(),
    };
    let pull = |g: DVector<f64>| match subspace {
        Some(s) => s.pull_gradient(&g),
        None => g,
    };
    let mask = class.parameter_mask(h.obs(), h.lat());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut frozen: Option<Vec<Statistics>> = None;
    let mut since_refresh = 0usize;
    let mut converged = false;

    for epoch in 1..=config.epochs {
        let frozen_stats = matches!(config.algorithm, Algorithm::EmGd | Algorithm::EmMcgd);
        if frozen_stats && (frozen.is_none() || since_refresh >= config.estep_refresh_epochs || converged) {
            frozen = Some(conditional_statistics(&h, data)?);
            since_refresh = 0;
        }
        since_refresh += 1;

        let batches: Vec<Vec<usize>> = match config.algorithm {
            Algorithm::CeMcgd | Algorithm::EmMcgd => {
                order.shuffle(&mut rng);
                order.chunks(config.batch_size).map(<[usize]>::to_vec).collect()
            }
            _ => vec![(0..data.len()).collect()],
        };
        let mut step_result = Ok(());
        for batch in batches {
            let grad = match config.algorithm {
                Algorithm::CeGd => {
                    let target = e_step(&h, data)?;
                    gradient_against(&h, &c, class, &target)?
                }
                Algorithm::EmGd => {
                    let target = Statistics::mean(frozen.as_ref().expect("refreshed"))?;
                    gradient_against(&h, &c, class, &target)?
                }
                Algorithm::CeMcgd => {
                    let xs: Vec<&Observation> = batch.iter().map(|&i| &data[i]).collect();
                    let model = sampled_model_statistics(&h, &c, config.mc_model_samples, &mut rng)?;
                    let target = sampled_data_statistics(&h, &xs, config.mc_conditional_samples, &mut rng)?;
                    (model.to_vector() - target.to_vector()).component_mul(&mask)
                }
                Algorithm::EmMcgd => {
                    let stats = frozen.as_ref().expect("refreshed");
                    let picked: Vec<Statistics> = batch.iter().map(|&i| stats[i].clone()).collect();
                    let target = Statistics::mean(&picked)?;
                    let model = sampled_model_statistics(&h, &c, config.mc_model_samples, &mut rng)?;
                    (model.to_vector() - target.to_vector()).component_mul(&mask)
                }
                Algorithm::Em => unreachable!("handled above"),
            };
            converged = grad.amax() < 1e-6;
            adam.step(&mut params, &pull(grad));
            match project_parameters(&h, class, &embed(&params)) {
                Ok((next, changed)) => {
                    if changed {
                        params = match subspace {
                            Some(s) => s.restrict(&next.to_vector()),
                            None => next.to_vector(),
                        };
                    }
                    c = class.conjugation(&next)?;
                    h = next;
                }
                Err(e) => {
                    step_result = Err(e);
                    break;
                }
            }
        }
        let ce = step_result.and_then(|_| cross_entropy(&h, &c, data)).unwrap_or(f64::NAN);
        trace.push(ce);
        if !ce.is_finite() {
            return finish(h, c, trace, Some(epoch));
        }
    }
    finish(h, c, trace, None)
}
