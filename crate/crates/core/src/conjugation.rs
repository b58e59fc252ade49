//! Conjugation parameters and canonical conjugated harmoniums.
//!
//! A harmonium is conjugated when the observable log-partition along the
//! likelihood is affine in the latent statistic,
//!
//! ```text
//! psi_X(theta_X + Theta_XZ s_Z(z)) = s_Z(z).rho + chi   for all z,
//! ```
//!
//! in which case the prior is `theta_Z + rho` and the joint log-partition is
//! `psi_Z(theta_Z + rho) + chi`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, domain, Error, Result};
use crate::exfam::{normal, Family, Observation};
use crate::harmonium::{Conjugation, Harmonium};

/// Closed-form conjugation parameters for a categorical latent:
/// `rho_k = psi_X(theta_X + column_k) - psi_X(theta_X)` and `chi = psi_X(theta_X)`.
pub fn categorical_conjugation(h: &Harmonium) -> Result<Conjugation> {
    if !matches!(h.lat(), Family::Categorical { .. }) {
        return Err(Error::Structure(format!("categorical conjugation needs a categorical latent, got {:?}", h.lat())));
    }
    let chi = h.obs().log_partition(h.obs_bias())?;
    let rho = h
        .interaction()
        .column_iter()
        .map(|col| Ok(h.obs().log_partition(&(h.obs_bias() + col))? - chi))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Conjugation::new(DVector::from_vec(rho), chi))
}

/// Splits a linear-Gaussian interaction matrix into its mean block, after
/// checking that every other entry is exactly zero.
pub(crate) fn mean_block(obs: &Family, lat: &Family, interaction: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = linear_gaussian_dims(obs, lat)?;
    let stray = interaction
        .iter()
        .enumerate()
        .any(|(idx, v)| *v != 0.0 && !(idx % interaction.nrows() < n && idx / interaction.nrows() < m));
    if stray {
        return Err(Error::Structure(
            "linear-Gaussian interactions must vanish outside the block pairing x with the first-order latent statistic"
                .into(),
        ));
    }
    Ok(interaction.view((0, 0), (n, m)).into_owned())
}

fn linear_gaussian_dims(obs: &Family, lat: &Family) -> Result<(usize, usize)> {
    match (obs, lat) {
        (Family::MultivariateNormal { dim: n }, Family::MultivariateNormal { dim: m })
        | (Family::MultivariateNormal { dim: n }, Family::Boltzmann { neurons: m }) => Ok((*n, *m)),
        _ => Err(Error::Structure(format!(
            "linear-Gaussian conjugation needs a normal observable and a normal or Boltzmann latent, got {obs:?} and {lat:?}"
        ))),
    }
}

/// Indicator of the interaction entries a linear-Gaussian harmonium may use,
/// or `None` when every entry is free.
pub fn interaction_mask(obs: &Family, lat: &Family) -> Option<DMatrix<f64>> {
    let (n, m) = linear_gaussian_dims(obs, lat).ok()?;
    Some(DMatrix::from_fn(obs.dimension(), lat.dimension(), |i, j| if i < n && j < m { 1.0 } else { 0.0 }))
}

/// Closed-form conjugation parameters for a normal observable whose
/// interactions only pair `x` with the first-order latent statistic.
///
/// With `P = -2 Theta_X^sigma` and mean block `W`,
/// `chi = psi_X(theta_X)`, `rho^m = W^T P^-1 theta_X^m`, and the quadratic
/// latent term is `W^T P^-1 W / 2`.
pub fn linear_gaussian_conjugation(h: &Harmonium) -> Result<Conjugation> {
    let w = mean_block(h.obs(), h.lat(), h.interaction())?;
    let n = w.nrows();
    let (lin, sym) = normal::unpack(n, h.obs_bias().as_slice());
    let precision = &sym * -2.0;
    let chol = precision.clone().cholesky().ok_or_else(|| domain("observable precision is not positive definite"))?;
    let chi = h.obs().log_partition(h.obs_bias())?;
    let rho_lin = w.tr_mul(&chol.solve(&lin));
    let quad = w.tr_mul(&chol.solve(&w)) * 0.5;
    let rho = match h.lat() {
        Family::MultivariateNormal { .. } => normal::pack(&rho_lin, &quad),
        Family::Boltzmann { neurons } => boltzmann_fold(*neurons, &rho_lin, &quad),
        _ => unreachable!("checked by mean_block"),
    };
    Ok(Conjugation::new(rho, chi))
}

/// Packs `z.lin + z^T quad z` over binary `z` into Boltzmann coordinates.
fn boltzmann_fold(m: usize, lin: &DVector<f64>, quad: &DMatrix<f64>) -> DVector<f64> {
    let mut rho = DVector::zeros(m + m * m.saturating_sub(1) / 2);
    let mut k = m;
    for i in 0..m {
        rho[i] = lin[i] + quad[(i, i)];
        for j in i + 1..m {
            rho[k] = quad[(i, j)] + quad[(j, i)];
            k += 1;
        }
    }
    rho
}

/// Exact conjugation parameters where a closed form exists.
pub fn exact_conjugation(h: &Harmonium) -> Result<Conjugation> {
    match (h.obs(), h.lat()) {
        (_, Family::Categorical { .. }) => categorical_conjugation(h),
        (Family::MultivariateNormal { .. }, Family::MultivariateNormal { .. } | Family::Boltzmann { .. }) => {
            linear_gaussian_conjugation(h)
        }
        (obs, lat) => Err(Error::Unsupported(format!("no closed-form conjugation for {obs:?} over {lat:?}"))),
    }
}

/// Largest absolute deviation of the conjugation equation over the probes.
pub fn verify_conjugation(h: &Harmonium, c: &Conjugation, probes: &[Observation]) -> Result<f64> {
    check_len(h.lat().dimension(), c.rho.len())?;
    probes.iter().try_fold(0.0f64, |worst, z| {
        let s = h.lat().sufficient_statistic(z)?;
        let lhs = h.obs().log_partition(&h.likelihood_from_statistic(&s))?;
        Ok(worst.max((lhs - s.dot(&c.rho) - c.chi).abs()))
    })
}

/// Least-squares conjugation parameters and the largest residual over the probes.
pub fn fit_conjugation(h: &Harmonium, probes: &[Observation]) -> Result<(Conjugation, f64)> {
    let stats = probes.iter().map(|z| h.lat().sufficient_statistic(z)).collect::<Result<Vec<_>>>()?;
    fit_affine(h.obs(), h.obs_bias(), h.interaction(), &stats)
}

/// Regresses `psi_X(theta_X + Theta s)` on `(s, 1)` over arbitrary latent
/// statistic vectors `s`, which need not come from a [`Family`].
pub fn fit_affine(
    obs: &Family,
    obs_bias: &DVector<f64>,
    interaction: &DMatrix<f64>,
    stats: &[DVector<f64>],
) -> Result<(Conjugation, f64)> {
    let d = interaction.ncols();
    if stats.len() < d + 1 {
        return Err(Error::Fit(format!("{} probes cannot determine {} coefficients", stats.len(), d + 1)));
    }
    let mut design = DMatrix::zeros(stats.len(), d + 1);
    let mut target = DVector::zeros(stats.len());
    for (r, s) in stats.iter().enumerate() {
        check_len(d, s.len())?;
        design.view_mut((r, 0), (1, d)).copy_from(&s.transpose());
        design[(r, d)] = 1.0;
        target[r] = obs.log_partition(&(obs_bias + interaction * s))?;
    }
    let sv = design.singular_values();
    let tol = sv.max() * 1e-10 * stats.len().max(d + 1) as f64;
    if sv.iter().filter(|&&s| s > tol).count() < d + 1 {
        return Err(Error::Fit("probe design matrix is rank deficient".into()));
    }
    let mut gram = design.tr_mul(&design);
    for i in 0..=d {
        gram[(i, i)] += 1e-12;
    }
    let coef = gram
        .cholesky()
        .ok_or_else(|| Error::Fit("normal equations are not positive definite".into()))?
        .solve(&design.tr_mul(&target));
    let residual = (&design * &coef - &target).amax();
    Ok((Conjugation::new(coef.rows(0, d).into_owned(), coef[d]), residual))
}

/// Probe points spread over a latent sample space. Finite spaces are cycled
/// through exhaustively, circles are evenly spaced, others are random.
pub fn probes<R: Rng + ?Sized>(lat: &Family, count: usize, rng: &mut R) -> Result<Vec<Observation>> {
    if let Some(support) = lat.support() {
        return Ok(support.iter().cycle().take(count).cloned().collect());
    }
    let mut gauss = || -> f64 { rng.sample(StandardNormal) };
    Ok(match lat {
        Family::VonMisesProduct { dim } => {
            // grid with `per` evenly spaced angles along each axis
            let per = (count as f64).powf(1.0 / *dim as f64).ceil().max(1.0) as usize;
            (0..count)
                .map(|i| {
                    Observation::new(
                        (0..*dim).map(|j| ((i / per.pow(j as u32)) % per) as f64 * TAU / per as f64).collect(),
                    )
                })
                .collect()
        }
        Family::MultivariateNormal { dim } => {
            (0..count).map(|_| Observation::new((0..*dim).map(|_| 2.0 * gauss()).collect())).collect()
        }
        Family::Dirichlet { dim } => {
            return lat.sample(&DVector::zeros(dim + 1), rng, count);
        }
        Family::PoissonProduct { neurons: dim } | Family::CoMPoissonProduct { dim } => (0..count)
            .map(|_| Observation::new((0..*dim).map(|_| (3.0 * gauss()).abs().floor()).collect()))
            .collect(),
        Family::ConjugatePrior { base } => (0..count)
            .map(|_| Observation::new(base.random_natural(rng, 1.0).as_slice().to_vec()))
            .collect(),
        Family::Categorical { .. } | Family::Boltzmann { .. } => unreachable!("finite support"),
    })
}

/// The conjugated harmonium that performs Bayesian estimation of the natural
/// parameters of `obs`: the latent is the conjugate prior family over those
/// parameters, `theta_X = 0`, `Theta_XZ = [I | 0]`, `rho = (0, .., 0, 1)`, `chi = 0`.
pub fn bayes_estimation_harmonium(obs: Family) -> Result<(Harmonium, Conjugation)> {
    let d = obs.dimension();
    let lat = Family::conjugate_prior(obs.clone());
    let mut interaction = DMatrix::zeros(d, d + 1);
    interaction.view_mut((0, 0), (d, d)).fill_with_identity();
    let h = Harmonium::new(obs, lat, DVector::zeros(d), DVector::zeros(d + 1), interaction)?;
    let mut rho = DVector::zeros(d + 1);
    rho[d] = 1.0;
    Ok((h, Conjugation::new(rho, 0.0)))
}

/// Categorical observations over `d + 1` states with a Dirichlet latent over
/// the weights. Row `i` of the interaction has `-1` in column 0 and `+1` in
/// column `i + 1`; `rho = (-1, 0, .., 0)` and `chi = 0`.
pub fn dirichlet_categorical_harmonium(d: usize, lat_bias: DVector<f64>) -> Result<(Harmonium, Conjugation)> {
    if d == 0 {
        return Err(domain("Dirichlet-categorical harmonium needs at least two categories"));
    }
    let mut interaction = DMatrix::zeros(d, d + 1);
    for i in 0..d {
        interaction[(i, 0)] = -1.0;
        interaction[(i, i + 1)] = 1.0;
    }
    let h = Harmonium::new(
        Family::Categorical { states: d },
        Family::Dirichlet { dim: d },
        DVector::zeros(d),
        lat_bias,
        interaction,
    )?;
    let mut rho = DVector::zeros(d + 1);
    rho[0] = -1.0;
    Ok((h, Conjugation::new(rho, 0.0)))
}

/// A finite mixture with the given weights and component natural parameters,
/// expressed as a harmonium with a categorical latent.
pub fn mixture_from_components(
    obs: Family,
    weights: &[f64],
    components: &[DVector<f64>],
) -> Result<(Harmonium, Conjugation)> {
    if weights.len() < 2 || weights.len() != components.len() {
        return Err(domain("a mixture needs matching weights and components, at least two of each"));
    }
    if weights.iter().any(|&w| !(w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(domain("mixture weights must be positive and sum to 1"));
    }
    let k = weights.len() - 1;
    let lat = Family::Categorical { states: k };
    let base = components[0].clone();
    let mut interaction = DMatrix::zeros(obs.dimension(), k);
    for (j, comp) in components[1..].iter().enumerate() {
        check_len(obs.dimension(), comp.len())?;
        obs.validate_natural(comp.as_slice())?;
        interaction.set_column(j, &(comp - &base));
    }
    let prior = DVector::from_fn(k, |i, _| weights[i + 1].ln() - weights[0].ln());
    let draft = Harmonium::new(obs.clone(), lat.clone(), base.clone(), prior.clone(), interaction.clone())?;
    let c = categorical_conjugation(&draft)?;
    let h = Harmonium::new(obs, lat, base, prior - &c.rho, interaction)?;
    Ok((h, c))
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(domain(format!("{what} must be symmetric")));
    }
    Ok(m.clone().cholesky().ok_or_else(|| domain(format!("{what} must be positive definite")))?.inverse())
}

/// The linear Gaussian model `z ~ N(m_Z, S_Z)`, `x | z ~ N(m_X + W z, S_X)`
/// in harmonium form.
pub fn lgm_from_moments(
    mean_x: &DVector<f64>,
    cov_x: &DMatrix<f64>,
    loading: &DMatrix<f64>,
    mean_z: &DVector<f64>,
    cov_z: &DMatrix<f64>,
) -> Result<(Harmonium, Conjugation)> {
    let (n, m) = (mean_x.len(), mean_z.len());
    if cov_x.shape() != (n, n) || cov_z.shape() != (m, m) || loading.shape() != (n, m) {
        return Err(Error::Structure("inconsistent linear Gaussian model shapes".into()));
    }
    let prec_x = spd_inverse(cov_x, "observable covariance")?;
    let prec_z = spd_inverse(cov_z, "latent covariance")?;
    let obs = Family::MultivariateNormal { dim: n };
    let lat = Family::MultivariateNormal { dim: m };
    let obs_bias = normal::pack(&(&prec_x * mean_x), &(&prec_x * -0.5));
    let mut interaction = DMatrix::zeros(obs.dimension(), lat.dimension());
    interaction.view_mut((0, 0), (n, m)).copy_from(&(&prec_x * loading));
    let prior = normal::pack(&(&prec_z * mean_z), &(&prec_z * -0.5));
    let draft = Harmonium::new(obs.clone(), lat.clone(), obs_bias.clone(), prior.clone(), interaction.clone())?;
    let c = linear_gaussian_conjugation(&draft)?;
    let h = Harmonium::new(obs, lat, obs_bias, prior - &c.rho, interaction)?;
    Ok((h, c))
}
