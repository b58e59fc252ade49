//! Harmoniums: joint exponential families over an observable `X` and a latent
//! `Z` with sufficient statistic `(s_X, s_Z, s_X s_Z^T)`.
//!
//! ```text
//! log q(x, z) = s_X(x).theta_X + s_Z(z).theta_Z + s_X(x).Theta_XZ.s_Z(z)
//!               - psi_XZ + log mu_X(x) + log mu_Z(z)
//! ```
//!
//! The joint log-partition is only computable when the harmonium is
//! conjugated, so every normalized quantity takes a [`Conjugation`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::exfam::{Family, Observation};

/// Conjugation parameters: `psi_X(theta_X + Theta_XZ s_Z(z)) = s_Z(z).rho + chi`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conjugation {
    pub rho: DVector<f64>,
    pub chi: f64,
}

impl Conjugation {
    pub fn new(rho: DVector<f64>, chi: f64) -> Self {
        Conjugation { rho, chi }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HarmoniumJson", into = "HarmoniumJson")]
pub struct Harmonium {
    obs: Family,
    lat: Family,
    obs_bias: DVector<f64>,
    lat_bias: DVector<f64>,
    interaction: DMatrix<f64>,
}

impl Harmonium {
    pub fn new(
        obs: Family,
        lat: Family,
        obs_bias: DVector<f64>,
        lat_bias: DVector<f64>,
        interaction: DMatrix<f64>,
    ) -> Result<Self> {
        check_len(obs.dimension(), obs_bias.len())?;
        check_len(lat.dimension(), lat_bias.len())?;
        if interaction.shape() != (obs.dimension(), lat.dimension()) {
            return Err(Error::Structure(format!(
                "interaction matrix is {:?}, expected {:?}",
                interaction.shape(),
                (obs.dimension(), lat.dimension())
            )));
        }
        if !interaction.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("interaction matrix must be finite".into()));
        }
        obs.validate_natural(obs_bias.as_slice())?;
        lat.validate_natural(lat_bias.as_slice())?;
        Ok(Harmonium { obs, lat, obs_bias, lat_bias, interaction })
    }

    /// A harmonium with no interactions, i.e. independent `X` and `Z`.
    pub fn independent(obs: Family, lat: Family, obs_bias: DVector<f64>, lat_bias: DVector<f64>) -> Result<Self> {
        let interaction = DMatrix::zeros(obs.dimension(), lat.dimension());
        Self::new(obs, lat, obs_bias, lat_bias, interaction)
    }

    pub fn obs(&self) -> &Family {
        &self.obs
    }

    pub fn lat(&self) -> &Family {
        &self.lat
    }

    pub fn obs_bias(&self) -> &DVector<f64> {
        &self.obs_bias
    }

    pub fn lat_bias(&self) -> &DVector<f64> {
        &self.lat_bias
    }

    pub fn interaction(&self) -> &DMatrix<f64> {
        &self.interaction
    }

    /// Number of parameters `d_X + d_Z + d_X d_Z`.
    pub fn parameter_len(&self) -> usize {
        let (dx, dz) = self.interaction.shape();
        dx + dz + dx * dz
    }

    /// Parameters as one vector: `theta_X`, `theta_Z`, then `Theta_XZ` row-major.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.parameter_len());
        v.extend_from_slice(self.obs_bias.as_slice());
        v.extend_from_slice(self.lat_bias.as_slice());
        for row in self.interaction.row_iter() {
            v.extend(row.iter());
        }
        DVector::from_vec(v)
    }

    /// Inverse of [`Harmonium::to_vector`] with the same families.
    pub fn with_vector(&self, v: &DVector<f64>) -> Result<Self> {
        check_len(self.parameter_len(), v.len())?;
        let (dx, dz) = self.interaction.shape();
        let obs_bias = v.rows(0, dx).into_owned();
        let lat_bias = v.rows(dx, dz).into_owned();
        let interaction = DMatrix::from_row_slice(dx, dz, &v.as_slice()[dx + dz..]);
        Self::new(self.obs.clone(), self.lat.clone(), obs_bias, lat_bias, interaction)
    }

    /// `theta_X + Theta_XZ s_Z(z)`.
    pub fn likelihood_params(&self, z: &[f64]) -> Result<DVector<f64>> {
        let s = self.lat.sufficient_statistic(z)?;
        Ok(self.likelihood_from_statistic(&s))
    }

    pub(crate) fn likelihood_from_statistic(&self, s_z: &DVector<f64>) -> DVector<f64> {
        &self.obs_bias + &self.interaction * s_z
    }

    /// `theta_Z + s_X(x) Theta_XZ`.
    pub fn posterior_params(&self, x: &[f64]) -> Result<DVector<f64>> {
        let s = self.obs.sufficient_statistic(x)?;
        Ok(self.posterior_from_statistic(&s))
    }

    pub(crate) fn posterior_from_statistic(&self, s_x: &DVector<f64>) -> DVector<f64> {
        &self.lat_bias + self.interaction.tr_mul(s_x)
    }

    /// Natural parameters `theta_Z + rho` of the prior `q_Z`.
    pub fn prior_params(&self, c: &Conjugation) -> Result<DVector<f64>> {
        check_len(self.lat.dimension(), c.rho.len())?;
        Ok(&self.lat_bias + &c.rho)
    }

    /// `psi_Z(theta_Z + rho) + chi`.
    pub fn joint_log_partition(&self, c: &Conjugation) -> Result<f64> {
        Ok(self.lat.log_partition(&self.prior_params(c)?)? + c.chi)
    }

    pub fn joint_log_density(&self, c: &Conjugation, x: &[f64], z: &[f64]) -> Result<f64> {
        let s_x = self.obs.sufficient_statistic(x)?;
        let s_z = self.lat.sufficient_statistic(z)?;
        let energy = s_x.dot(&self.obs_bias) + s_z.dot(&self.lat_bias) + s_x.dot(&(&self.interaction * &s_z));
        Ok(energy - self.joint_log_partition(c)? + self.obs.log_base_measure(x)? + self.lat.log_base_measure(z)?)
    }

    /// Log-density of the observable marginal `q_X`.
    pub fn observable_log_density(&self, c: &Conjugation, x: &[f64]) -> Result<f64> {
        let norm = self.joint_log_partition(c)?;
        self.observable_log_density_with(norm, x)
    }

    /// As [`Harmonium::observable_log_density`] with a precomputed
    /// [`Harmonium::joint_log_partition`].
    pub fn observable_log_density_with(&self, joint_log_partition: f64, x: &[f64]) -> Result<f64> {
        let s_x = self.obs.sufficient_statistic(x)?;
        let post = self.posterior_from_statistic(&s_x);
        Ok(s_x.dot(&self.obs_bias) + self.lat.log_partition(&post)? - joint_log_partition
            + self.obs.log_base_measure(x)?)
    }

    /// Ancestral sampling: `z` from the prior, then `x` from the likelihood.
    pub fn sample_joint<R: Rng + ?Sized>(
        &self,
        c: &Conjugation,
        rng: &mut R,
        count: usize,
    ) -> Result<Vec<(Observation, Observation)>> {
        let zs = self.lat.sample(&self.prior_params(c)?, rng, count)?;
        zs.into_iter()
            .map(|z| {
                let theta = self.likelihood_params(&z)?;
                let x = self.obs.sample(&theta, rng, 1)?.pop().expect("one draw");
                Ok((x, z))
            })
            .collect()
    }

    /// Gibbs chain alternating `z ~ q(z | x)` and `x ~ q(x | z)`, starting at `x0`.
    pub fn gibbs_chain<R: Rng + ?Sized>(
        &self,
        x0: &[f64],
        steps: usize,
        rng: &mut R,
    ) -> Result<Vec<(Observation, Observation)>> {
        self.obs.validate_observation(x0)?;
        let mut x = Observation::from(x0);
        let mut chain = Vec::with_capacity(steps);
        for _ in 0..steps {
            let z = self.lat.sample(&self.posterior_params(&x)?, rng, 1)?.pop().expect("one draw");
            x = self.obs.sample(&self.likelihood_params(&z)?, rng, 1)?.pop().expect("one draw");
            chain.push((x.clone(), z));
        }
        Ok(chain)
    }

    /// Conditional expected statistics `(s_X(x), tau_Z(posterior), s_X(x) tau_Z^T)`.
    pub fn conditional_expectations(&self, x: &[f64]) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
        let s_x = self.obs.sufficient_statistic(x)?;
        let eta_z = self.lat.to_mean(&self.posterior_from_statistic(&s_x))?;
        let outer = &s_x * eta_z.transpose();
        Ok((s_x, eta_z, outer))
    }
}

/// Serialized form of a [`Harmonium`].
#[derive(Serialize, Deserialize)]
struct HarmoniumJson {
    obs: Family,
    lat: Family,
    theta_x: Vec<f64>,
    theta_z: Vec<f64>,
    /// Rows of the interaction matrix.
    theta_xz: Vec<Vec<f64>>,
}

impl TryFrom<HarmoniumJson> for Harmonium {
    type Error = Error;

    fn try_from(j: HarmoniumJson) -> Result<Self> {
        let rows = j.theta_xz.len();
        let cols = j.theta_xz.first().map_or(j.lat.dimension(), Vec::len);
        if j.theta_xz.iter().any(|r| r.len() != cols) {
            return Err(Error::Structure("ragged theta_xz rows".into()));
        }
        let flat: Vec<f64> = j.theta_xz.into_iter().flatten().collect();
        let interaction = DMatrix::from_row_slice(rows, cols, &flat);
        Harmonium::new(j.obs, j.lat, DVector::from_vec(j.theta_x), DVector::from_vec(j.theta_z), interaction)
    }
}

impl From<Harmonium> for HarmoniumJson {
    fn from(h: Harmonium) -> Self {
        HarmoniumJson {
            theta_x: h.obs_bias.as_slice().to_vec(),
            theta_z: h.lat_bias.as_slice().to_vec(),
            theta_xz: h.interaction.row_iter().map(|r| r.iter().copied().collect()).collect(),
            obs: h.obs,
            lat: h.lat,
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::special::log_sum_exp;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    /// Categorical(2) x Categorical(2) with exact conjugation computed by
    /// enumerating the observable log-partition.
    fn toy(seed: u64) -> (Harmonium, Conjugation) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = Family::Categorical { states: 2 };
        let lat = Family::Categorical { states: 2 };
        let h = Harmonium::new(
            obs.clone(),
            lat.clone(),
            obs.random_natural(&mut rng, 0.5),
            lat.random_natural(&mut rng, 0.5),
            DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.5..0.5)),
        )
        .unwrap();
        let chi = obs.log_partition(h.obs_bias()).unwrap();
        let rho = DVector::from_fn(2, |k, _| {
            obs.log_partition(&(h.obs_bias() + h.interaction().column(k))).unwrap() - chi
        });
        (h, Conjugation::new(rho, chi))
    }

    fn states() -> Vec<Vec<f64>> {
        (0..3).map(|k| vec![k as f64]).collect()
    }

    #[test]
    fn zero_interaction_gives_bias_conditionals() {
        let h = Harmonium::independent(
            Family::PoissonProduct { neurons: 2 },
            Family::Categorical { states: 2 },
            v(&[0.1, 0.2]),
            v(&[0.3, -0.3]),
        )
        .unwrap();
        assert_eq!(h.likelihood_params(&[2.0]).unwrap(), v(&[0.1, 0.2]));
        assert_eq!(h.posterior_params(&[5.0, 1.0]).unwrap(), v(&[0.3, -0.3]));
        let c = Conjugation::new(DVector::zeros(2), h.obs().log_partition(h.obs_bias()).unwrap());
        let psi = h.lat().log_partition(h.lat_bias()).unwrap() + h.obs().log_partition(h.obs_bias()).unwrap();
        assert_relative_eq!(h.joint_log_partition(&c).unwrap(), psi, epsilon = 1e-14);
        let x = [3.0, 1.0];
        assert_relative_eq!(
            h.observable_log_density(&c, &x).unwrap(),
            h.obs().log_density(h.obs_bias(), &x).unwrap(),
            epsilon = 1e-12
        );
        let (s, eta, outer) = h.conditional_expectations(&x).unwrap();
        let tau = h.lat().to_mean(h.lat_bias()).unwrap();
        assert_eq!(s, v(&x));
        assert_relative_eq!(eta, tau.clone(), epsilon = 1e-15);
        assert_relative_eq!(outer, v(&x) * tau.transpose(), epsilon = 1e-15);
    }

    #[test]
    fn mixture_likelihood_selects_columns() {
        let h = Harmonium::new(
            Family::PoissonProduct { neurons: 2 },
            Family::Categorical { states: 2 },
            v(&[0.1, 0.2]),
            v(&[0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        )
        .unwrap();
        assert_eq!(h.likelihood_params(&[0.0]).unwrap(), v(&[0.1, 0.2]));
        assert_eq!(h.likelihood_params(&[2.0]).unwrap(), v(&[2.1, 4.2]));
    }

    #[test]
    fn small_mixture_joint_log_partition_matches_brute_force() {
        let h = Harmonium::new(
            Family::PoissonProduct { neurons: 1 },
            Family::Categorical { states: 1 },
            v(&[0.0]),
            v(&[0.0]),
            DMatrix::from_element(1, 1, 2f64.ln()),
        )
        .unwrap();
        let c = Conjugation::new(v(&[1.0]), 1.0);
        let expected = (1.0 + 1f64.exp()).ln() + 1.0;
        assert_relative_eq!(h.joint_log_partition(&c).unwrap(), expected, epsilon = 1e-14);
        let brute = log_sum_exp((0..2).flat_map(|k| {
            (0..=60).map(move |n| {
                let s = n as f64 * if k == 1 { 2f64.ln() } else { 0.0 };
                s - crate::special::ln_factorial(n as f64)
            })
        }));
        assert_relative_eq!(brute, expected, epsilon = 1e-12);
    }

    #[test]
    fn factorizations_agree_on_discrete_toy() {
        for seed in 0..5 {
            let (h, c) = toy(seed);
            let prior = h.prior_params(&c).unwrap();
            let mut total = Vec::new();
            for x in states() {
                for z in states() {
                    let joint = h.joint_log_density(&c, &x, &z).unwrap();
                    let via_lik = h.obs().log_density(&h.likelihood_params(&z).unwrap(), &x).unwrap()
                        + h.lat().log_density(&prior, &z).unwrap();
                    let via_post = h.lat().log_density(&h.posterior_params(&x).unwrap(), &z).unwrap()
                        + h.observable_log_density(&c, &x).unwrap();
                    assert_relative_eq!(joint, via_lik, epsilon = 1e-10);
                    assert_relative_eq!(joint, via_post, epsilon = 1e-10);
                    total.push(joint);
                }
            }
            assert_relative_eq!(log_sum_exp(total).exp(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn prior_matches_enumerated_marginal() {
        let (h, c) = toy(3);
        let prior = h.prior_params(&c).unwrap();
        for z in states() {
            let marginal = log_sum_exp(states().iter().map(|x| h.joint_log_density(&c, x, &z).unwrap()));
            assert_relative_eq!(marginal, h.lat().log_density(&prior, &z).unwrap(), epsilon = 1e-9);
        }
    }

    #[test]
    fn conditional_parameters_are_affine_in_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let obs = Family::MultivariateNormal { dim: 2 };
        let lat = Family::Boltzmann { neurons: 3 };
        let h = Harmonium::new(
            obs.clone(),
            lat.clone(),
            obs.random_natural(&mut rng, 1.0),
            lat.random_natural(&mut rng, 1.0),
            DMatrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let zs: Vec<Vec<f64>> = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
        let base = h.likelihood_params(&zs[0]).unwrap();
        for z in &zs[1..] {
            let s = lat.sufficient_statistic(z).unwrap() - lat.sufficient_statistic(&zs[0]).unwrap();
            assert_relative_eq!(h.likelihood_params(z).unwrap() - &base, h.interaction() * s, epsilon = 1e-12);
        }
        let x0 = [0.2, -1.0];
        let x1 = [1.5, 0.3];
        let ds = obs.sufficient_statistic(&x1).unwrap() - obs.sufficient_statistic(&x0).unwrap();
        let diff = h.posterior_params(&x1).unwrap() - h.posterior_params(&x0).unwrap();
        assert_relative_eq!(diff, h.interaction().tr_mul(&ds), epsilon = 1e-12);
    }

    #[test]
    fn one_dimensional_gaussian_posterior_contraction() {
        let h = Harmonium::new(
            Family::MultivariateNormal { dim: 1 },
            Family::MultivariateNormal { dim: 1 },
            v(&[0.0, -0.5]),
            v(&[0.0, -0.5]),
            DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        assert_relative_eq!(h.posterior_params(&[2.0]).unwrap(), v(&[1.4, -0.5]), epsilon = 1e-15);
    }

    #[test]
    fn joint_samples_match_enumerated_expectations() {
        let (h, c) = toy(1);
        let n = 40_000;
        let draws = h.sample_joint(&c, &mut ChaCha8Rng::seed_from_u64(8), n).unwrap();
        for x in states() {
            for z in states() {
                let p = h.joint_log_density(&c, &x, &z).unwrap().exp();
                let freq = draws.iter().filter(|(a, b)| **a == x[..] && **b == z[..]).count() as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() < 5.0 * se, "{x:?},{z:?}: {freq} vs {p}");
            }
        }
        assert!(h.sample_joint(&c, &mut ChaCha8Rng::seed_from_u64(8), 0).unwrap().is_empty());
    }

    #[test]
    fn gibbs_chain_visits_states_in_joint_proportion() {
        let (h, c) = toy(2);
        let steps = 100_000;
        let chain = h.gibbs_chain(&[0.0], steps, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(h.gibbs_chain(&[0.0], 0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap().is_empty());
        for x in states() {
            for z in states() {
                let p = h.joint_log_density(&c, &x, &z).unwrap().exp();
                let freq = chain.iter().filter(|(a, b)| **a == x[..] && **b == z[..]).count() as f64 / steps as f64;
                // autocorrelated chain, so a loose multiple of the iid error
                let se = (p * (1.0 - p) / steps as f64).sqrt();
                assert!((freq - p).abs() < 15.0 * se, "{x:?},{z:?}: {freq} vs {p}");
            }
        }
    }

    #[test]
    fn conditional_expectations_match_posterior_draws() {
        let (h, _) = toy(6);
        let x = [1.0];
        let (s, eta, outer) = h.conditional_expectations(&x).unwrap();
        let post = h.posterior_params(&x).unwrap();
        let n = 100_000;
        let draws = h.lat().sample(&post, &mut ChaCha8Rng::seed_from_u64(1), n).unwrap();
        for k in 0..2 {
            let freq = draws.iter().filter(|z| z.as_index() == Some(k + 1)).count() as f64 / n as f64;
            let se = (eta[k] * (1.0 - eta[k]) / n as f64).sqrt();
            assert!((freq - eta[k]).abs() < 5.0 * se);
        }
        assert_relative_eq!(outer, &s * eta.transpose());
    }

    #[test]
    fn json_round_trip_uses_fixed_field_names() {
        let (h, _) = toy(0);
        let json = serde_json::to_value(&h).unwrap();
        for key in ["obs", "lat", "theta_x", "theta_z", "theta_xz"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["theta_xz"].as_array().unwrap().len(), 2);
        let back: Harmonium = serde_json::from_value(json).unwrap();
        assert_eq!(back, h);
        let bad = r#"{"obs":{"kind":"categorical","states":2},"lat":{"kind":"categorical","states":2},
            "theta_x":[0,0],"theta_z":[0,0],"theta_xz":[[0,0],[0]]}"#;
        assert!(serde_json::from_str::<Harmonium>(bad).is_err());
    }

    #[test]
    fn vector_round_trip() {
        let (h, _) = toy(9);
        assert_eq!(h.with_vector(&h.to_vector()).unwrap(), h);
    }
}
