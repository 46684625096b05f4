//! Exact Gaussian conditioning on arbitrary measurement sets, and the
//! delay-limited scheduled estimator that reproduces it online.
//!
//! The centerpiece is an equivalence: running the per-round recursion with
//! the right gain schedule yields, at every agent and time, exactly the
//! conditional mean given everything that could have reached the agent under
//! hop-by-hop propagation delays. `batch_mmse` is the slow, obviously-correct
//! reference; `odol_schedule` + `odol_run` is the online form; the test
//! suites hold them together.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::model::{MeasurementTrace, WorldModel};
use crate::topology::{HopStructure, NetworkTopology};
use crate::{Error, Result};

/// Identity of one scalar-block measurement: which agent took it and when.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MeasurementId {
    pub agent: usize,
    pub time: usize,
}

impl MeasurementId {
    pub fn new(agent: usize, time: usize) -> Self {
        MeasurementId { agent, time }
    }
}

/// An ordered, duplicate-free collection of measurement indices available to
/// one agent at one time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InformationSet {
    owner: usize,
    time: usize,
    entries: Vec<MeasurementId>,
}

impl InformationSet {
    /// Builds a set from explicit entries, rejecting duplicates. The entry
    /// order is preserved and defines all stacking built on the set.
    pub fn new(owner: usize, time: usize, entries: Vec<MeasurementId>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(*e) {
                return Err(Error::InvalidInput(format!(
                    "duplicate measurement index (agent {}, t {})",
                    e.agent, e.time
                )));
            }
        }
        Ok(InformationSet {
            owner,
            time,
            entries,
        })
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn entries(&self) -> &[MeasurementId] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: MeasurementId) -> bool {
        self.entries.contains(&id)
    }
}

/// Everything agent `i` could know at time `t` when information travels one
/// hop per round: measurement `(j, τ)` is in reach iff `τ ≤ t - dist(i, j)`.
/// With a window of depth `w`, entries older than `t - w + 1` are dropped.
///
/// Entries are ordered canonically: hop distance ascending, then agent id
/// ascending, then time ascending. Every stacked matrix in this crate
/// follows that order.
pub fn oracle_information_set(
    hops: &HopStructure,
    agent: usize,
    t: usize,
    window: Option<usize>,
) -> Result<InformationSet> {
    if t == 0 {
        return Err(Error::InvalidInput("information sets start at t = 1".into()));
    }
    if let Some(w) = window {
        let needed = hops.max_eccentricity();
        if w < needed {
            return Err(Error::InvalidWindow(format!(
                "window {w} is shallower than the largest eccentricity {needed}"
            )));
        }
    }
    let mut entries = Vec::new();
    for k in 0..=hops.eccentricity(agent) {
        if k > t {
            break;
        }
        let newest = t - k;
        if newest < 1 {
            break;
        }
        let oldest = window.map_or(1, |w| 1.max(t.saturating_sub(w - 1)));
        if oldest > newest {
            continue;
        }
        for &j in hops.layer(agent, k) {
            for tau in oldest..=newest {
                entries.push(MeasurementId::new(j, tau));
            }
        }
    }
    InformationSet::new(agent, t, entries)
}

/// Gain, stacked observation map, and posterior covariance for conditioning
/// the state on the measurements named by `info`, in `info`'s entry order.
pub(crate) fn conditioning_parts(
    model: &WorldModel,
    info: &InformationSet,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let p = model.state_dim();
    let q = model.measurement_dim();
    let n = info.len();
    let mut stacked_map = DMatrix::zeros(q * n, p);
    let mut stacked_noise = DMatrix::zeros(q * n, q * n);
    for (slot, e) in info.entries().iter().enumerate() {
        if e.agent == 0 || e.agent > model.agent_count() {
            return Err(Error::InvalidInput(format!(
                "information set names unknown agent {}",
                e.agent
            )));
        }
        stacked_map
            .rows_mut(slot * q, q)
            .copy_from(model.observation(e.agent));
        stacked_noise
            .view_mut((slot * q, slot * q), (q, q))
            .copy_from(model.noise_cov(e.agent));
    }
    let cross = model.prior_cov() * stacked_map.transpose(); // p × qn
    let innovation_cov = &stacked_map * &cross + stacked_noise;
    let gain = linalg::right_divide_sym(&cross, &innovation_cov); // p × qn
    let posterior = model.prior_cov() - &gain * cross.transpose();
    let posterior = linalg::psd_project(&posterior, "conditioning posterior")?;
    Ok((gain, stacked_map, posterior))
}

/// Conditional mean and error covariance of the state given the measurements
/// named by `info`, taken from `trace`. The empty set returns the prior.
pub fn batch_mmse(
    model: &WorldModel,
    info: &InformationSet,
    trace: &MeasurementTrace,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if trace.agent_count() != model.agent_count() {
        return Err(Error::InvalidInput(format!(
            "trace covers {} agents, model has {}",
            trace.agent_count(),
            model.agent_count()
        )));
    }
    for e in info.entries() {
        if e.time == 0 || e.time > trace.horizon() {
            return Err(Error::InvalidInput(format!(
                "measurement (agent {}, t {}) is outside the trace horizon {}",
                e.agent,
                e.time,
                trace.horizon()
            )));
        }
    }
    let (gain, stacked_map, posterior) = conditioning_parts(model, info)?;
    let q = model.measurement_dim();
    let mut stacked_y = DVector::zeros(q * info.len());
    for (slot, e) in info.entries().iter().enumerate() {
        stacked_y
            .rows_mut(slot * q, q)
            .copy_from(trace.measurement(e.agent, e.time));
    }
    let innovation = stacked_y - &stacked_map * model.prior_mean();
    let estimate = model.prior_mean() + &gain * innovation;
    Ok((estimate, posterior))
}

/// One round of the scheduled recursion for one agent: which measurements
/// arrive, the gain applied to them, and the propagation of the previous
/// estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdolStep {
    /// Newly arrived measurements this round, canonical order.
    delta: Vec<MeasurementId>,
    /// Gain on the stacked new measurements, `p × q·|delta|`.
    gain: DMatrix<f64>,
    /// Propagation of the previous estimate, `I - gain · stacked_map`, `p×p`.
    propagate: DMatrix<f64>,
    /// Stacked observation maps of the arrivals, `q·|delta| × p`.
    stacked_map: DMatrix<f64>,
    /// Error covariance after the round.
    error_cov: DMatrix<f64>,
}

impl OdolStep {
    pub fn delta(&self) -> &[MeasurementId] {
        &self.delta
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn propagate(&self) -> &DMatrix<f64> {
        &self.propagate
    }

    pub fn stacked_map(&self) -> &DMatrix<f64> {
        &self.stacked_map
    }

    pub fn error_cov(&self) -> &DMatrix<f64> {
        &self.error_cov
    }

    pub(crate) fn from_parts(
        delta: Vec<MeasurementId>,
        gain: DMatrix<f64>,
        propagate: DMatrix<f64>,
        stacked_map: DMatrix<f64>,
        error_cov: DMatrix<f64>,
    ) -> Self {
        OdolStep {
            delta,
            gain,
            propagate,
            stacked_map,
            error_cov,
        }
    }
}

/// Data-independent gain schedule for the delay-limited estimator: one
/// [`OdolStep`] per agent per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdolSchedule {
    horizon: usize,
    state_dim: usize,
    measurement_dim: usize,
    prior_mean: DVector<f64>,
    /// `steps[i-1][t-1]` = agent i's round-t step.
    steps: Vec<Vec<OdolStep>>,
}

impl OdolSchedule {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn agent_count(&self) -> usize {
        self.steps.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement_dim
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    /// Agent `i`'s step at round `t` (both 1-based).
    pub fn step(&self, agent: usize, t: usize) -> &OdolStep {
        &self.steps[agent - 1][t - 1]
    }

    pub(crate) fn steps_raw(&self) -> &[Vec<OdolStep>] {
        &self.steps
    }

    pub(crate) fn from_parts(
        horizon: usize,
        state_dim: usize,
        measurement_dim: usize,
        prior_mean: DVector<f64>,
        steps: Vec<Vec<OdolStep>>,
    ) -> Self {
        OdolSchedule {
            horizon,
            state_dim,
            measurement_dim,
            prior_mean,
            steps,
        }
    }
}

/// The measurements that first reach `agent` at round `t`: its own fresh
/// one, plus each k-hop neighbour's measurement from k rounds ago.
/// Canonical order (hop ascending, id ascending).
pub fn arrival_set(hops: &HopStructure, agent: usize, t: usize) -> Vec<MeasurementId> {
    let mut delta = Vec::new();
    for k in 0..=hops.eccentricity(agent) {
        if k >= t {
            break;
        }
        for &j in hops.layer(agent, k) {
            delta.push(MeasurementId::new(j, t - k));
        }
    }
    delta
}

/// Builds the full gain schedule for `horizon` rounds on `topo`. Purely a
/// function of topology and model — no measurement data involved.
pub fn odol_schedule(
    topo: &NetworkTopology,
    model: &WorldModel,
    horizon: usize,
) -> Result<OdolSchedule> {
    if horizon == 0 {
        return Err(Error::InvalidSize("horizon must be at least 1".into()));
    }
    if topo.agent_count() != model.agent_count() {
        return Err(Error::InvalidInput(format!(
            "topology has {} agents, model has {}",
            topo.agent_count(),
            model.agent_count()
        )));
    }
    let hops = topo.hop_structure();
    let p = model.state_dim();
    let q = model.measurement_dim();
    let mut steps = Vec::with_capacity(topo.agent_count());
    for agent in 1..=topo.agent_count() {
        let mut agent_steps = Vec::with_capacity(horizon);
        let mut error_cov = model.prior_cov().clone();
        for t in 1..=horizon {
            let delta = arrival_set(&hops, agent, t);
            let n = delta.len();
            let mut stacked_map = DMatrix::zeros(q * n, p);
            let mut stacked_noise = DMatrix::zeros(q * n, q * n);
            for (slot, e) in delta.iter().enumerate() {
                stacked_map
                    .rows_mut(slot * q, q)
                    .copy_from(model.observation(e.agent));
                stacked_noise
                    .view_mut((slot * q, slot * q), (q, q))
                    .copy_from(model.noise_cov(e.agent));
            }
            let cross = &error_cov * stacked_map.transpose();
            let innovation_cov = &stacked_map * &cross + stacked_noise;
            let gain = linalg::right_divide_sym(&cross, &innovation_cov);
            let propagate = DMatrix::identity(p, p) - &gain * &stacked_map;
            let next_cov = linalg::psd_project(
                &(&propagate * &error_cov),
                &format!("scheduled error covariance (agent {agent}, t {t})"),
            )?;
            error_cov = next_cov.clone();
            agent_steps.push(OdolStep::from_parts(
                delta,
                gain,
                propagate,
                stacked_map,
                next_cov,
            ));
        }
        steps.push(agent_steps);
    }
    Ok(OdolSchedule::from_parts(
        horizon,
        p,
        q,
        model.prior_mean().clone(),
        steps,
    ))
}

/// Per-agent estimates over a whole run, `t = 0..=horizon`, with
/// `u_{i,0}` = prior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTrajectory {
    algorithm: String,
    /// `estimates[i-1][t]` = agent i's estimate after round t.
    estimates: Vec<Vec<DVector<f64>>>,
}

impl EstimateTrajectory {
    pub fn new(algorithm: impl Into<String>, estimates: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::InvalidSize("trajectory needs at least one agent".into()));
        }
        let len = estimates[0].len();
        if len < 2 {
            return Err(Error::InvalidSize(
                "trajectory needs the prior point and at least one round".into(),
            ));
        }
        if estimates.iter().any(|row| row.len() != len) {
            return Err(Error::InvalidSize(
                "all agents must cover the same horizon".into(),
            ));
        }
        Ok(EstimateTrajectory {
            algorithm: algorithm.into(),
            estimates,
        })
    }

    pub fn algorithm(&self) -> &str {
        &self.algorithm
    }

    pub fn agent_count(&self) -> usize {
        self.estimates.len()
    }

    /// Number of rounds (the trajectory also stores the `t = 0` prior).
    pub fn horizon(&self) -> usize {
        self.estimates[0].len() - 1
    }

    /// Estimate of `agent` after round `t` (`t = 0` is the prior).
    pub fn estimate(&self, agent: usize, t: usize) -> &DVector<f64> {
        &self.estimates[agent - 1][t]
    }

    /// Squared estimation errors `‖x - u_{i,t}‖²` as `[agent-1][t]`.
    pub fn squared_errors(&self, state: &DVector<f64>) -> Vec<Vec<f64>> {
        self.estimates
            .iter()
            .map(|rounds| rounds.iter().map(|u| (state - u).norm_squared()).collect())
            .collect()
    }

    /// Writes rows `trial,agent,t,component,value` (components 1-based).
    pub fn write_csv(&self, out: &mut dyn Write, trial: usize) -> Result<()> {
        for agent in 1..=self.agent_count() {
            for t in 0..=self.horizon() {
                let u = self.estimate(agent, t);
                for c in 0..u.len() {
                    writeln!(out, "{trial},{agent},{t},{},{}", c + 1, u[c])?;
                }
            }
        }
        Ok(())
    }
}

/// CSV header matching [`EstimateTrajectory::write_csv`].
pub const TRAJECTORY_CSV_HEADER: &str = "trial,agent,t,component,value";

/// Runs the scheduled recursion over one trace.
pub fn odol_run(schedule: &OdolSchedule, trace: &MeasurementTrace) -> Result<EstimateTrajectory> {
    if trace.agent_count() != schedule.agent_count() {
        return Err(Error::InvalidInput(format!(
            "trace covers {} agents, schedule covers {}",
            trace.agent_count(),
            schedule.agent_count()
        )));
    }
    if trace.horizon() > schedule.horizon() {
        return Err(Error::InvalidInput(format!(
            "trace horizon {} exceeds schedule horizon {}",
            trace.horizon(),
            schedule.horizon()
        )));
    }
    let q = schedule.measurement_dim();
    let mut estimates = Vec::with_capacity(schedule.agent_count());
    for agent in 1..=schedule.agent_count() {
        let mut rounds = Vec::with_capacity(trace.horizon() + 1);
        rounds.push(schedule.prior_mean().clone());
        for t in 1..=trace.horizon() {
            let step = schedule.step(agent, t);
            let mut arrivals = DVector::zeros(q * step.delta().len());
            for (slot, e) in step.delta().iter().enumerate() {
                arrivals
                    .rows_mut(slot * q, q)
                    .copy_from(trace.measurement(e.agent, e.time));
            }
            let previous = &rounds[t - 1];
            rounds.push(step.propagate() * previous + step.gain() * arrivals);
        }
        estimates.push(rounds);
    }
    EstimateTrajectory::new("odol", estimates)
}
