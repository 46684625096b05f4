//! The linear-Gaussian world: a static state drawn once per trial, observed
//! by every agent through a fixed linear map plus Gaussian noise.
//!
//! All randomness flows through seeded substreams (see [`crate::rng`]), so a
//! `(model, horizon, seed)` triple pins a measurement trace bit-exactly no
//! matter how sampling is scheduled.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::rng::{self, stream};
use crate::{Error, Result};

/// Static description of the estimation problem: prior, observation maps,
/// and noise covariances. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldModel {
    /// State dimension.
    p: usize,
    /// Per-agent measurement dimension.
    q: usize,
    /// Prior mean of the state.
    xbar: DVector<f64>,
    /// Prior covariance of the state (symmetric positive semidefinite).
    sigma_x: DMatrix<f64>,
    /// Observation map of each agent, `q x p`, indexed by `id - 1`.
    observation: Vec<DMatrix<f64>>,
    /// Noise covariance of each agent, `q x q`, indexed by `id - 1`.
    noise_cov: Vec<DMatrix<f64>>,
}

#[derive(Deserialize)]
struct WorldModelData {
    p: usize,
    q: usize,
    xbar: DVector<f64>,
    sigma_x: DMatrix<f64>,
    observation: Vec<DMatrix<f64>>,
    noise_cov: Vec<DMatrix<f64>>,
}

impl<'de> Deserialize<'de> for WorldModel {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = WorldModelData::deserialize(deserializer)?;
        let model = WorldModel::new(raw.xbar, raw.sigma_x, raw.observation, raw.noise_cov)
            .map_err(serde::de::Error::custom)?;
        if model.p != raw.p || model.q != raw.q {
            return Err(serde::de::Error::custom(
                "declared dimensions disagree with matrix shapes",
            ));
        }
        Ok(model)
    }
}

impl WorldModel {
    /// Validates and assembles a model. Dimensions are inferred from the
    /// matrix shapes; the prior covariance must be symmetric positive
    /// semidefinite and every noise covariance symmetric positive
    /// semidefinite (positive definite in the usual regime; singular noise
    /// is allowed for noiseless desk checks).
    pub fn new(
        xbar: DVector<f64>,
        sigma_x: DMatrix<f64>,
        observation: Vec<DMatrix<f64>>,
        noise_cov: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let p = xbar.len();
        if p == 0 {
            return Err(Error::InvalidSize("state dimension must be positive".into()));
        }
        if observation.is_empty() {
            return Err(Error::InvalidSize("need at least one agent".into()));
        }
        if observation.len() != noise_cov.len() {
            return Err(Error::InvalidSize(format!(
                "{} observation maps but {} noise covariances",
                observation.len(),
                noise_cov.len()
            )));
        }
        if sigma_x.nrows() != p || sigma_x.ncols() != p {
            return Err(Error::InvalidSize(format!(
                "prior covariance is {}x{}, expected {p}x{p}",
                sigma_x.nrows(),
                sigma_x.ncols()
            )));
        }
        let q = observation[0].nrows();
        if q == 0 {
            return Err(Error::InvalidSize(
                "measurement dimension must be positive".into(),
            ));
        }
        for (slot, h) in observation.iter().enumerate() {
            if h.nrows() != q || h.ncols() != p {
                return Err(Error::InvalidSize(format!(
                    "agent {}: observation map is {}x{}, expected {q}x{p}",
                    slot + 1,
                    h.nrows(),
                    h.ncols()
                )));
            }
        }
        let sigma_x = linalg::psd_project(&sigma_x, "prior covariance")?;
        let mut checked_noise = Vec::with_capacity(noise_cov.len());
        for (slot, cov) in noise_cov.into_iter().enumerate() {
            if cov.nrows() != q || cov.ncols() != q {
                return Err(Error::InvalidSize(format!(
                    "agent {}: noise covariance is {}x{}, expected {q}x{q}",
                    slot + 1,
                    cov.nrows(),
                    cov.ncols()
                )));
            }
            let context = format!("noise covariance of agent {}", slot + 1);
            checked_noise.push(linalg::psd_project(&cov, &context)?);
        }
        Ok(WorldModel {
            p,
            q,
            xbar,
            sigma_x,
            observation,
            noise_cov: checked_noise,
        })
    }

    /// Scalar network with unit observation gains: every agent measures the
    /// one-dimensional state directly under shared variances. Handy for desk
    /// checks with closed-form answers.
    pub fn scalar_network(m: usize, prior_var: f64, noise_var: f64) -> Result<Self> {
        if prior_var < 0.0 || noise_var < 0.0 {
            return Err(Error::InvalidScale("variances must be nonnegative".into()));
        }
        WorldModel::new(
            DVector::zeros(1),
            DMatrix::from_element(1, 1, prior_var),
            vec![DMatrix::from_element(1, 1, 1.0); m],
            vec![DMatrix::from_element(1, 1, noise_var); m],
        )
    }

    pub fn state_dim(&self) -> usize {
        self.p
    }

    pub fn measurement_dim(&self) -> usize {
        self.q
    }

    pub fn agent_count(&self) -> usize {
        self.observation.len()
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.xbar
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.sigma_x
    }

    /// Observation map `H_i` of `agent` (1-based).
    pub fn observation(&self, agent: usize) -> &DMatrix<f64> {
        &self.observation[agent - 1]
    }

    /// Noise covariance of `agent` (1-based).
    pub fn noise_cov(&self, agent: usize) -> &DMatrix<f64> {
        &self.noise_cov[agent - 1]
    }

    /// All observation maps stacked in ascending agent order (`qm x p`).
    pub fn stacked_observation(&self) -> DMatrix<f64> {
        let m = self.agent_count();
        let mut stacked = DMatrix::zeros(self.q * m, self.p);
        for (slot, h) in self.observation.iter().enumerate() {
            stacked.rows_mut(slot * self.q, self.q).copy_from(h);
        }
        stacked
    }

    /// Block-diagonal of all noise covariances in ascending agent order.
    pub fn stacked_noise_cov(&self) -> DMatrix<f64> {
        let m = self.agent_count();
        let mut stacked = DMatrix::zeros(self.q * m, self.q * m);
        for (slot, cov) in self.noise_cov.iter().enumerate() {
            stacked
                .view_mut((slot * self.q, slot * self.q), (self.q, self.q))
                .copy_from(cov);
        }
        stacked
    }
}

/// One trial's worth of data: a single state draw and every agent's
/// measurements over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementTrace {
    /// The sampled state.
    x: DVector<f64>,
    /// `y[i-1][t-1]` = measurement of agent i at time t (t = 1..=horizon).
    y: Vec<Vec<DVector<f64>>>,
    horizon: usize,
    seed: u64,
}

impl MeasurementTrace {
    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    /// Measurement of `agent` at time `t` (both 1-based).
    pub fn measurement(&self, agent: usize, t: usize) -> &DVector<f64> {
        &self.y[agent - 1][t - 1]
    }

    /// All agents' measurements at time `t`, stacked ascending (`qm`).
    pub fn stacked_measurement(&self, t: usize) -> DVector<f64> {
        let m = self.y.len();
        let q = self.y[0][0].len();
        let mut out = DVector::zeros(q * m);
        for slot in 0..m {
            out.rows_mut(slot * q, q).copy_from(&self.y[slot][t - 1]);
        }
        out
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn agent_count(&self) -> usize {
        self.y.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn standard_normal_vector(n: usize, rng: &mut ChaCha12Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Per-agent noise standard deviations drawn from a folded normal: the
/// absolute value of a standard normal draw, scaled. All outputs are
/// strictly positive (an exact-zero draw is redrawn).
pub fn folded_normal_stds(m: usize, scale: f64, seed: u64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidSize("need at least one agent".into()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidScale(format!(
            "folded-normal scale must be positive and finite, got {scale}"
        )));
    }
    let mut rng = rng::substream(seed, &[stream::NOISE_STD]);
    let mut stds = Vec::with_capacity(m);
    for _ in 0..m {
        let std = loop {
            let z: f64 = rng.sample(StandardNormal);
            let candidate = z.abs() * scale;
            if candidate > 0.0 {
                break candidate;
            }
        };
        stds.push(std);
    }
    Ok(stds)
}

/// Random model in the standard experimental configuration: zero prior mean,
/// identity prior covariance, observation maps with i.i.d. standard-normal
/// entries (filled row-major from a per-agent substream), isotropic noise at
/// the given standard deviations.
pub fn random_world(p: usize, q: usize, noise_stds: &[f64], seed: u64) -> Result<WorldModel> {
    if p == 0 || q == 0 {
        return Err(Error::InvalidSize(
            "state and measurement dimensions must be positive".into(),
        ));
    }
    if noise_stds.is_empty() {
        return Err(Error::InvalidSize("need at least one agent".into()));
    }
    let mut observation = Vec::with_capacity(noise_stds.len());
    let mut noise_cov = Vec::with_capacity(noise_stds.len());
    for (slot, &std) in noise_stds.iter().enumerate() {
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::InvalidScale(format!(
                "agent {}: noise std must be positive and finite, got {std}",
                slot + 1
            )));
        }
        let agent = (slot + 1) as u64;
        let mut rng = rng::substream(seed, &[stream::MEASUREMENT_MAP, agent]);
        let mut h = DMatrix::zeros(q, p);
        for r in 0..q {
            for c in 0..p {
                h[(r, c)] = rng.sample(StandardNormal);
            }
        }
        observation.push(h);
        noise_cov.push(DMatrix::identity(q, q) * (std * std));
    }
    WorldModel::new(
        DVector::zeros(p),
        DMatrix::identity(p, p),
        observation,
        noise_cov,
    )
}

/// Samples one trial: a state draw plus independent noise per agent and
/// round, each from its own `(agent, time)` substream so regeneration is
/// bit-exact and order-independent.
pub fn sample_trace(model: &WorldModel, horizon: usize, seed: u64) -> Result<MeasurementTrace> {
    if horizon == 0 {
        return Err(Error::InvalidSize("horizon must be at least 1".into()));
    }
    let p = model.state_dim();
    let q = model.measurement_dim();
    let state_root = linalg::sym_sqrt(model.prior_cov(), "prior covariance")?;
    let mut state_rng = rng::substream(seed, &[stream::STATE]);
    let x = model.prior_mean() + &state_root * standard_normal_vector(p, &mut state_rng);

    let mut noise_roots = Vec::with_capacity(model.agent_count());
    for agent in 1..=model.agent_count() {
        let context = format!("noise covariance of agent {agent}");
        noise_roots.push(linalg::sym_sqrt(model.noise_cov(agent), &context)?);
    }

    let mut y = Vec::with_capacity(model.agent_count());
    for agent in 1..=model.agent_count() {
        let mut rounds = Vec::with_capacity(horizon);
        let mean = model.observation(agent) * &x;
        for t in 1..=horizon {
            let mut noise_rng = rng::substream(seed, &[stream::NOISE, agent as u64, t as u64]);
            let noise = &noise_roots[agent - 1] * standard_normal_vector(q, &mut noise_rng);
            rounds.push(&mean + noise);
        }
        y.push(rounds);
    }
    Ok(MeasurementTrace {
        x,
        y,
        horizon,
        seed,
    })
}
