//! Exponential families.
//!
//! A [`Family`] fixes a sample space, a minimal sufficient statistic `s`, and a
//! base measure `mu`. A density in the family is identified by natural
//! parameters `theta`,
//!
//! ```text
//! log q(x) = s(x) . theta - psi(theta) + log mu(x)
//! ```
//!
//! or equivalently by mean parameters `eta = E[s(X)] = grad psi(theta)`. The
//! forward mapping `theta -> eta` is [`Family::to_mean`] and the backward
//! mapping is [`Family::to_natural`].
//!
//! Statistic layouts:
//!
//! | family                 | statistic                                      |
//! |------------------------|------------------------------------------------|
//! | `Categorical`          | one-hot over states `1..=k`, state 0 is zero    |
//! | `PoissonProduct`       | counts `n`                                     |
//! | `MultivariateNormal`   | `x`, then `tril(x x^T)` row-major with diagonal |
//! | `VonMisesProduct`      | `(cos z_j, sin z_j)` pairs                     |
//! | `Dirichlet`            | `log z_i` for all `d + 1` weights              |
//! | `Boltzmann`            | `z`, then `z_i z_j` for `i < j` row-major       |
//! | `CoMPoissonProduct`    | `(n_j, log n_j!)` pairs                        |
//! | `ConjugatePrior`       | `(z, psi_base(z))` over base natural parameters |

mod boltzmann;
pub(crate) mod categorical;
mod com_poisson;
mod dirichlet;
pub(crate) mod normal;
mod poisson;
mod von_mises;


use std::ops::Deref;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, domain, Error, Result};

pub use boltzmann::MAX_NEURONS as MAX_BOLTZMANN_NEURONS;
pub use categorical::weights as categorical_weights;
pub use com_poisson::count_moments as com_poisson_count_moments;
pub use normal::moments as normal_moments;

/// Identifies one exponential family.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// Categorical over `0..=states`; `states` is the count of non-zero states.
    Categorical { states: usize },
    /// Independent Poisson counts.
    PoissonProduct { neurons: usize },
    MultivariateNormal { dim: usize },
    /// Independent von Mises angles.
    VonMisesProduct { dim: usize },
    /// Dirichlet over the `dim`-simplex, i.e. `dim + 1` weights.
    Dirichlet { dim: usize },
    /// Fully connected Boltzmann machine over binary neurons.
    Boltzmann { neurons: usize },
    /// Independent Conway-Maxwell-Poisson counts.
    #[serde(rename = "com_poisson_product")]
    CoMPoissonProduct { dim: usize },
    /// The family over natural parameters of `base` with statistic
    /// `(z, psi_base(z))`. Only densities up to normalization and the
    /// conjugation equation are available for it.
    ConjugatePrior { base: Box<Family> },
}

impl Family {
    /// Boltzmann machine, refusing sizes beyond the enumeration budget.
    pub fn boltzmann(neurons: usize) -> Result<Self> {
        boltzmann::check_budget(neurons)?;
        Ok(Family::Boltzmann { neurons })
    }

    pub fn conjugate_prior(base: Family) -> Self {
        Family::ConjugatePrior { base: Box::new(base) }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Family::Categorical { states } => *states,
            Family::PoissonProduct { neurons } => *neurons,
            Family::MultivariateNormal { dim } => dim + dim * (dim + 1) / 2,
            Family::VonMisesProduct { dim } => 2 * dim,
            Family::Dirichlet { dim } => dim + 1,
            Family::Boltzmann { neurons } => neurons + neurons * (neurons.saturating_sub(1)) / 2,
            Family::CoMPoissonProduct { dim } => 2 * dim,
            Family::ConjugatePrior { base } => base.dimension() + 1,
        }
    }

    /// Length of an encoded observation.
    pub fn observation_len(&self) -> usize {
        match self {
            Family::Categorical { .. } => 1,
            Family::PoissonProduct { neurons } | Family::Boltzmann { neurons } => *neurons,
            Family::MultivariateNormal { dim }
            | Family::VonMisesProduct { dim }
            | Family::CoMPoissonProduct { dim } => *dim,
            Family::Dirichlet { dim } => dim + 1,
            Family::ConjugatePrior { base } => base.dimension(),
        }
    }

    pub fn validate_observation(&self, x: &[f64]) -> Result<()> {
        check_len(self.observation_len(), x.len())?;
        match self {
            Family::Categorical { states } => categorical::validate(*states, x),
            Family::PoissonProduct { .. } | Family::CoMPoissonProduct { .. } => {
                if x.iter().all(|&n| n >= 0.0 && n.fract() == 0.0 && n.is_finite()) {
                    Ok(())
                } else {
                    Err(domain("counts must be non-negative integers"))
                }
            }
            Family::MultivariateNormal { .. } => finite(x),
            Family::VonMisesProduct { .. } => von_mises::validate(x),
            Family::Dirichlet { .. } => dirichlet::validate(x),
            Family::Boltzmann { .. } => boltzmann::validate(x),
            Family::ConjugatePrior { base } => base.validate_natural(x),
        }
    }

    /// Checks that `theta` has the right length and lies in the natural domain.
    pub fn validate_natural(&self, theta: &[f64]) -> Result<()> {
        check_len(self.dimension(), theta.len())?;
        finite(theta)?;
        match self {
            Family::MultivariateNormal { dim } => normal::validate_natural(*dim, theta),
            Family::Dirichlet { .. } => {
                if theta.iter().all(|&t| t > -1.0) {
                    Ok(())
                } else {
                    Err(domain("Dirichlet natural parameters must exceed -1"))
                }
            }
            Family::Boltzmann { neurons } => boltzmann::check_budget(*neurons),
            Family::CoMPoissonProduct { .. } => com_poisson::validate_natural(theta),
            _ => Ok(()),
        }
    }

    pub fn sufficient_statistic(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.validate_observation(x)?;
        Ok(self.statistic_unchecked(x))
    }

    /// Sufficient statistic of an observation already known to be valid.
    pub(crate) fn statistic_unchecked(&self, x: &[f64]) -> DVector<f64> {
        match self {
            Family::Categorical { states } => categorical::statistic(*states, x),
            Family::PoissonProduct { .. } => DVector::from_column_slice(x),
            Family::MultivariateNormal { dim } => normal::statistic(*dim, x),
            Family::VonMisesProduct { .. } => von_mises::statistic(x),
            Family::Dirichlet { .. } => DVector::from_iterator(x.len(), x.iter().map(|z| z.ln())),
            Family::Boltzmann { neurons } => boltzmann::statistic(*neurons, x),
            Family::CoMPoissonProduct { .. } => com_poisson::statistic(x),
            Family::ConjugatePrior { base } => {
                let z = DVector::from_column_slice(x);
                let psi = base.log_partition(&z).unwrap_or(f64::NAN);
                let mut s = z.insert_row(x.len(), 0.0);
                s[x.len()] = psi;
                s
            }
        }
    }

    pub fn log_base_measure(&self, x: &[f64]) -> Result<f64> {
        self.validate_observation(x)?;
        Ok(match self {
            Family::PoissonProduct { .. } => -x.iter().map(|&n| crate::special::ln_factorial(n)).sum::<f64>(),
            Family::MultivariateNormal { dim } => -0.5 * (*dim as f64) * (2.0 * std::f64::consts::PI).ln(),
            Family::VonMisesProduct { dim } => -(*dim as f64) * (2.0 * std::f64::consts::PI).ln(),
            Family::Categorical { .. }
            | Family::Dirichlet { .. }
            | Family::Boltzmann { .. }
            | Family::CoMPoissonProduct { .. }
            | Family::ConjugatePrior { .. } => 0.0,
        })
    }

    /// Log-partition function `psi(theta)`.
    pub fn log_partition(&self, theta: &DVector<f64>) -> Result<f64> {
        self.validate_natural(theta.as_slice())?;
        match self {
            Family::Categorical { .. } => Ok(categorical::log_partition(theta)),
            Family::PoissonProduct { .. } => Ok(theta.iter().map(|t| t.exp()).sum()),
            Family::MultivariateNormal { dim } => normal::log_partition(*dim, theta),
            Family::VonMisesProduct { .. } => Ok(von_mises::log_partition(theta)),
            Family::Dirichlet { .. } => Ok(dirichlet::log_partition(theta)),
            Family::Boltzmann { neurons } => Ok(boltzmann::log_partition(*neurons, theta)),
            Family::CoMPoissonProduct { .. } => com_poisson::log_partition(theta),
            Family::ConjugatePrior { .. } => Err(unsupported_prior("log-partition")),
        }
    }

    /// Forward mapping `eta = grad psi(theta)`.
    pub fn to_mean(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.validate_natural(theta.as_slice())?;
        match self {
            Family::Categorical { .. } => Ok(categorical::to_mean(theta)),
            Family::PoissonProduct { .. } => Ok(theta.map(f64::exp)),
            Family::MultivariateNormal { dim } => normal::to_mean(*dim, theta),
            Family::VonMisesProduct { .. } => Ok(von_mises::to_mean(theta)),
            Family::Dirichlet { .. } => Ok(dirichlet::to_mean(theta)),
            Family::Boltzmann { neurons } => Ok(boltzmann::to_mean(*neurons, theta)),
            Family::CoMPoissonProduct { .. } => com_poisson::to_mean(theta),
            Family::ConjugatePrior { .. } => Err(unsupported_prior("forward mapping")),
        }
    }

    /// Backward mapping `theta = tau^-1(eta)`.
    pub fn to_natural(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dimension(), eta.len())?;
        finite(eta.as_slice())?;
        match self {
            Family::Categorical { .. } => categorical::to_natural(eta),
            Family::PoissonProduct { .. } => {
                if eta.iter().all(|&e| e > 0.0) {
                    Ok(eta.map(f64::ln))
                } else {
                    Err(domain("Poisson rates must be positive"))
                }
            }
            Family::MultivariateNormal { dim } => normal::to_natural(*dim, eta),
            Family::VonMisesProduct { .. } => von_mises::to_natural(eta),
            Family::Dirichlet { .. } => dirichlet::to_natural(eta),
            Family::Boltzmann { neurons } => boltzmann::to_natural(*neurons, eta),
            Family::CoMPoissonProduct { .. } => com_poisson::to_natural(eta),
            Family::ConjugatePrior { .. } => Err(unsupported_prior("backward mapping")),
        }
    }

    /// `s(x) . theta + log mu(x)`, the log-density up to `psi(theta)`.
    pub fn unnormalized_log_density(&self, theta: &DVector<f64>, x: &[f64]) -> Result<f64> {
        check_len(self.dimension(), theta.len())?;
        let s = self.sufficient_statistic(x)?;
        Ok(s.dot(theta) + self.log_base_measure(x)?)
    }

    pub fn log_density(&self, theta: &DVector<f64>, x: &[f64]) -> Result<f64> {
        let psi = self.log_partition(theta)?;
        Ok(self.unnormalized_log_density(theta, x)? - psi)
    }

    /// Draws `count` independent observations.
    pub fn sample<R: Rng + ?Sized>(&self, theta: &DVector<f64>, rng: &mut R, count: usize) -> Result<Vec<Observation>> {
        self.validate_natural(theta.as_slice())?;
        if count == 0 {
            return Ok(Vec::new());
        }
        match self {
            Family::Categorical { .. } => Ok(categorical::sample(theta, rng, count)),
            Family::PoissonProduct { .. } => poisson::sample(theta, rng, count),
            Family::MultivariateNormal { dim } => normal::sample(*dim, theta, rng, count),
            Family::VonMisesProduct { .. } => Ok(von_mises::sample(theta, rng, count)),
            Family::Dirichlet { .. } => dirichlet::sample(theta, rng, count),
            Family::Boltzmann { neurons } => Ok(boltzmann::sample(*neurons, theta, rng, count)),
            Family::CoMPoissonProduct { .. } => com_poisson::sample(theta, rng, count),
            Family::ConjugatePrior { .. } => Err(unsupported_prior("sampling")),
        }
    }

    /// Every point of a finite sample space, or `None` for infinite spaces.
    pub fn support(&self) -> Option<Vec<Observation>> {
        match self {
            Family::Categorical { states } => Some((0..=*states).map(Observation::index).collect()),
            Family::Boltzmann { neurons } if *neurons <= boltzmann::MAX_NEURONS => {
                Some(boltzmann::states(*neurons).map(Observation::from).collect())
            }
            _ => None,
        }
    }

    /// Pulls natural parameters back into the domain after an unconstrained
    /// update. Returns whether anything changed.
    pub fn project_natural(&self, theta: &mut DVector<f64>) -> bool {
        match self {
            Family::MultivariateNormal { dim } => normal::project(*dim, theta),
            Family::Dirichlet { .. } => {
                let mut changed = false;
                for t in theta.iter_mut() {
                    if *t <= -1.0 + 1e-8 {
                        *t = -1.0 + 1e-8;
                        changed = true;
                    }
                }
                changed
            }
            Family::CoMPoissonProduct { .. } => com_poisson::project(theta),
            _ => false,
        }
    }

    /// Random valid natural parameters, for initialization and testing.
    /// `scale` sets the spread of unconstrained coordinates.
    pub fn random_natural<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> DVector<f64> {
        let mut gauss = || -> f64 { rng.sample::<f64, _>(rand_distr::StandardNormal) };
        let d = self.dimension();
        match self {
            Family::MultivariateNormal { dim } => {
                let n = *dim;
                let a = nalgebra::DMatrix::from_fn(n, n, |_, _| scale * gauss() / (n as f64).sqrt());
                let precision = &a * a.transpose() + nalgebra::DMatrix::identity(n, n);
                let mean = DVector::from_fn(n, |_, _| scale * gauss());
                normal::pack(&(&precision * mean), &(precision * -0.5))
            }
            Family::Dirichlet { .. } => DVector::from_fn(d, |_, _| (scale * gauss()).exp() - 0.5),
            Family::CoMPoissonProduct { .. } => DVector::from_fn(d, |i, _| {
                if i % 2 == 0 {
                    scale * gauss()
                } else {
                    -(0.5 + (0.3 * scale * gauss()).exp())
                }
            }),
            Family::ConjugatePrior { .. } => DVector::from_fn(d, |_, _| scale * gauss()),
            _ => DVector::from_fn(d, |_, _| scale * gauss()),
        }
    }
}

fn unsupported_prior(what: &str) -> Error {
    Error::Unsupported(format!("{what} of the generic conjugate-prior family"))
}

fn finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(domain("non-finite value"))
    }
}

/// A point of a sample space, encoded as a real vector.
///
/// Categorical observations hold one index, Boltzmann observations hold
/// zeros and ones, counts hold non-negative integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        Observation(values)
    }

    pub fn index(k: usize) -> Self {
        Observation(vec![k as f64])
    }

    pub fn counts(counts: &[u64]) -> Self {
        Observation(counts.iter().map(|&c| c as f64).collect())
    }

    /// The categorical index, if this is a single non-negative integer.
    pub fn as_index(&self) -> Option<usize> {
        match self.0.as_slice() {
            [k] if *k >= 0.0 && k.fract() == 0.0 => Some(*k as usize),
            _ => None,
        }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Observation {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Observation {
    fn from(v: Vec<f64>) -> Self {
        Observation(v)
    }
}

impl From<&[f64]> for Observation {
    fn from(v: &[f64]) -> Self {
        Observation(v.to_vec())
    }
}

/// Natural parameters of one density in a family.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalPoint {
    family: Family,
    coords: DVector<f64>,
}

impl NaturalPoint {
    pub fn new(family: Family, coords: DVector<f64>) -> Result<Self> {
        family.validate_natural(coords.as_slice())?;
        Ok(NaturalPoint { family, coords })
    }

    pub fn from_slice(family: Family, coords: &[f64]) -> Result<Self> {
        Self::new(family, DVector::from_column_slice(coords))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn log_partition(&self) -> Result<f64> {
        self.family.log_partition(&self.coords)
    }

    pub fn to_mean(&self) -> Result<MeanPoint> {
        Ok(MeanPoint { family: self.family.clone(), coords: self.family.to_mean(&self.coords)? })
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.family.log_density(&self.coords, x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<Observation>> {
        self.family.sample(&self.coords, rng, count)
    }
}

/// Mean parameters `eta = E[s(X)]` of one density in a family.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPoint {
    family: Family,
    coords: DVector<f64>,
}

impl MeanPoint {
    pub fn new(family: Family, coords: DVector<f64>) -> Result<Self> {
        check_len(family.dimension(), coords.len())?;
        Ok(MeanPoint { family, coords })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn to_natural(&self) -> Result<NaturalPoint> {
        Ok(NaturalPoint { family: self.family.clone(), coords: self.family.to_natural(&self.coords)? })
    }
}

/// Damped Newton minimization of the convex objective `psi(theta) - theta . eta`,
/// shared by the families whose backward mapping has no closed form.
pub(crate) fn newton_backward(
    what: &'static str,
    eta: &DVector<f64>,
    init: DVector<f64>,
    // returns (psi, grad psi, hessian) or None outside the domain
    eval: impl Fn(&DVector<f64>) -> Option<(f64, DVector<f64>, nalgebra::DMatrix<f64>)>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let mut theta = init;
    let (mut psi, mut grad, mut hess) =
        eval(&theta).ok_or_else(|| domain(format!("{what}: initial point outside domain")))?;
    for _ in 0..max_iter {
        let g = &grad - eta;
        if g.amax() < tol {
            return Ok(theta);
        }
        let d = g.len();
        let mut h = hess.clone();
        let jitter = 1e-12 * (1.0 + h.diagonal().amax());
        for i in 0..d {
            h[(i, i)] += jitter;
        }
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone(),
        };
        let objective = psi - theta.dot(eta);
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &theta - &step * t;
            if let Some((p, gr, he)) = eval(&candidate) {
                let obj = p - candidate.dot(eta);
                if obj <= objective - 1e-4 * t * slope || (obj - objective).abs() <= 1e-15 * objective.abs().max(1.0) {
                    theta = candidate;
                    psi = p;
                    grad = gr;
                    hess = he;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            let g = &grad - eta;
            if g.amax() < tol.sqrt() {
                return Ok(theta);
            }
            return Err(Error::NoConvergence { what, iterations: max_iter });
        }
    }
    Err(Error::NoConvergence { what, iterations: max_iter })
}
