//! Windowed distributed estimator with constant memory.
//!
//! Relaying full histories lets every agent reach the delay-limited optimum,
//! but the per-round work then grows with time. This module trades a little
//! accuracy for constant work: each agent keeps only the last `window`
//! rounds of network measurements, and one set of time-invariant weights
//! ([`sdol_weights`]) turns the arriving raw measurements into the exact
//! minimum-mean-square estimate over that sliding window.
//!
//! The update subtracts the expiring round's contribution through a
//! precomputed correction, so from round `window` onwards the recursion
//! reproduces the windowed conditional expectation exactly; earlier rounds
//! run the same update against a zero-filled past and are deliberately
//! sub-optimal (the warm-up ends with a visible kink in the error curve).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::model::{MeasurementTrace, WorldModel};
use crate::oracle::EstimateTrajectory;
use crate::topology::NetworkTopology;
use crate::{Error, Result};

/// Time-invariant update weights for one agent.
///
/// Column blocks of the relay gain follow the arrival pattern: one block per
/// other agent, ordered by hop distance then ascending id. The window
/// pattern stacks one row block per `(agent, age)` pair, newest age first,
/// hop layers ascending within an age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdolAgentWeights {
    /// Combination applied to the previous estimate, `p×p`.
    propagate: DMatrix<f64>,
    /// Gain on the agent's own fresh measurement, `p×q`.
    own_gain: DMatrix<f64>,
    /// Gain on the stacked relayed arrivals, `p × q·(m−1)`.
    relay_gain: DMatrix<f64>,
    /// Correction removing the expiring round's influence, `p × q·m`.
    forget_gain: DMatrix<f64>,
    /// Gain condensing the windowed measurement history, `p × q·n_i`.
    window_gain: DMatrix<f64>,
    /// Weight of the windowed content inside the previous estimate, `p×p`.
    window_blend: DMatrix<f64>,
    /// Weight of the retained snapshot inside the previous estimate, `p×p`.
    snapshot_blend: DMatrix<f64>,
    /// Error covariance of the windowed-history estimate, `p×p`.
    window_cov: DMatrix<f64>,
    /// Error covariance of the estimate from round `window` onwards, `p×p`.
    steady_cov: DMatrix<f64>,
    /// Observation map of the windowed history stack, `q·n_i × p`.
    window_map: DMatrix<f64>,
    /// Noise covariance blocks of the windowed history stack, each `q×q`.
    window_noise: Vec<DMatrix<f64>>,
    /// Observation map of one fresh round (own first, then arrivals),
    /// `q·m × p`.
    fresh_map: DMatrix<f64>,
    /// Noise covariance blocks matching [`Self::fresh_map`], each `q×q`.
    fresh_noise: Vec<DMatrix<f64>>,
    /// `(agent, age)` pairs describing the windowed history stack rows.
    window_pattern: Vec<(usize, usize)>,
    /// `(agent, lag)` pairs describing the relayed arrivals each round.
    arrivals: Vec<(usize, usize)>,
    /// Largest hop distance from this agent.
    eccentricity: usize,
}

impl SdolAgentWeights {
    pub fn propagate(&self) -> &DMatrix<f64> {
        &self.propagate
    }

    pub fn own_gain(&self) -> &DMatrix<f64> {
        &self.own_gain
    }

    pub fn relay_gain(&self) -> &DMatrix<f64> {
        &self.relay_gain
    }

    pub fn forget_gain(&self) -> &DMatrix<f64> {
        &self.forget_gain
    }

    pub fn window_gain(&self) -> &DMatrix<f64> {
        &self.window_gain
    }

    pub fn window_blend(&self) -> &DMatrix<f64> {
        &self.window_blend
    }

    pub fn snapshot_blend(&self) -> &DMatrix<f64> {
        &self.snapshot_blend
    }

    pub fn window_cov(&self) -> &DMatrix<f64> {
        &self.window_cov
    }

    pub fn steady_cov(&self) -> &DMatrix<f64> {
        &self.steady_cov
    }

    pub fn window_map(&self) -> &DMatrix<f64> {
        &self.window_map
    }

    pub fn window_noise(&self) -> &[DMatrix<f64>] {
        &self.window_noise
    }

    pub fn fresh_map(&self) -> &DMatrix<f64> {
        &self.fresh_map
    }

    pub fn fresh_noise(&self) -> &[DMatrix<f64>] {
        &self.fresh_noise
    }

    pub fn window_pattern(&self) -> &[(usize, usize)] {
        &self.window_pattern
    }

    pub fn arrivals(&self) -> &[(usize, usize)] {
        &self.arrivals
    }

    pub fn eccentricity(&self) -> usize {
        self.eccentricity
    }
}

/// Data-independent weights for the windowed estimator: the global snapshot
/// condensation plus one [`SdolAgentWeights`] per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdolWeights {
    topology: NetworkTopology,
    window: usize,
    state_dim: usize,
    measurement_dim: usize,
    /// Condenses one full-network round into a state estimate, `p × q·m`.
    snapshot_gain: DMatrix<f64>,
    /// Error covariance of that condensed snapshot, `p×p`.
    snapshot_cov: DMatrix<f64>,
    agents: Vec<SdolAgentWeights>,
}

impl SdolWeights {
    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement_dim
    }

    pub fn snapshot_gain(&self) -> &DMatrix<f64> {
        &self.snapshot_gain
    }

    pub fn snapshot_cov(&self) -> &DMatrix<f64> {
        &self.snapshot_cov
    }

    /// Weights of `agent` (1-based).
    pub fn agent(&self, agent: usize) -> &SdolAgentWeights {
        &self.agents[agent - 1]
    }

    pub(crate) fn agents_raw(&self) -> &[SdolAgentWeights] {
        &self.agents
    }
}

/// Builds the time-invariant weights for a `window`-round sliding memory.
///
/// The estimator assumes a zero prior mean (the update is a pure linear
/// combination with no affine part) and a window at least as deep as the
/// network spread, so that a round's full snapshot has reached every agent
/// before it expires.
pub fn sdol_weights(
    topo: &NetworkTopology,
    model: &WorldModel,
    window: usize,
) -> Result<SdolWeights> {
    if topo.agent_count() != model.agent_count() {
        return Err(Error::InvalidInput(format!(
            "topology has {} agents, model has {}",
            topo.agent_count(),
            model.agent_count()
        )));
    }
    if model.prior_mean().norm() != 0.0 {
        return Err(Error::UnsupportedPrior(
            "the windowed estimator assumes a zero prior mean".into(),
        ));
    }
    let hops = topo.hop_structure();
    let spread = hops.max_eccentricity();
    if window == 0 || window < spread {
        return Err(Error::InvalidWindow(format!(
            "window {window} is shallower than the network spread {spread}"
        )));
    }
    let m = model.agent_count();
    let p = model.state_dim();
    let q = model.measurement_dim();
    // Condensation of one full-network round into an estimate.
    let snapshot_map = model.stacked_observation();
    let snapshot_noise = model.stacked_noise_cov();
    let cross = model.prior_cov() * snapshot_map.transpose();
    let snapshot_gain =
        linalg::right_divide_sym(&cross, &(&snapshot_map * &cross + snapshot_noise));
    // The products below are symmetric in exact arithmetic; re-symmetrizing
    // keeps accumulated solve error out of the covariance checks.
    let snapshot_cov = linalg::psd_project(
        &linalg::symmetrize(
            &((DMatrix::identity(p, p) - &snapshot_gain * &snapshot_map) * model.prior_cov()),
        ),
        "condensed snapshot covariance",
    )?;
    let mut agents = Vec::with_capacity(m);
    for i in 1..=m {
        let kappa = hops.eccentricity(i);
        // Windowed history: measurements of age 1..window-1, where a hop-k
        // measurement of age a is present exactly when k < a.
        let mut window_pattern = Vec::new();
        for age in 1..window {
            for k in 0..=kappa.min(age - 1) {
                for &j in hops.layer(i, k) {
                    window_pattern.push((j, age));
                }
            }
        }
        let n = window_pattern.len();
        let mut window_map = DMatrix::zeros(q * n, p);
        let mut window_noise = Vec::with_capacity(n);
        for (slot, &(j, _)) in window_pattern.iter().enumerate() {
            window_map
                .rows_mut(slot * q, q)
                .copy_from(model.observation(j));
            window_noise.push(model.noise_cov(j).clone());
        }
        let mut window_innovation = &window_map * model.prior_cov() * window_map.transpose();
        for (slot, block) in window_noise.iter().enumerate() {
            let mut diag = window_innovation.view_mut((slot * q, slot * q), (q, q));
            diag += block;
        }
        let window_gain = linalg::right_divide_sym(
            &(model.prior_cov() * window_map.transpose()),
            &window_innovation,
        );
        let condensed = &window_gain * &window_map; // p×p
        let window_cov = linalg::psd_project(
            &linalg::symmetrize(
                &((DMatrix::identity(p, p) - &condensed) * model.prior_cov()),
            ),
            &format!("windowed history covariance (agent {i})"),
        )?;
        // Blend of the windowed content and the retained snapshot inside the
        // previous estimate.
        let mut blend_innovation = &condensed * &snapshot_cov * condensed.transpose();
        for (slot, &(j, _)) in window_pattern.iter().enumerate() {
            let nblock = window_gain.columns(slot * q, q);
            blend_innovation += nblock * model.noise_cov(j) * nblock.transpose();
        }
        let blend_cross = &snapshot_cov * window_map.transpose() * window_gain.transpose();
        let window_blend =
            linalg::right_divide_sym(&blend_cross, &linalg::symmetrize(&blend_innovation));
        let snapshot_blend = DMatrix::identity(p, p) - &window_blend * &condensed;
        // One fresh round as this agent sees it: its own measurement, then
        // every other agent's by hop distance.
        let mut fresh_agents = vec![i];
        let mut arrivals = Vec::with_capacity(m - 1);
        for k in 1..=kappa {
            for &j in hops.layer(i, k) {
                fresh_agents.push(j);
                arrivals.push((j, k));
            }
        }
        let mut fresh_map = DMatrix::zeros(q * m, p);
        let mut fresh_noise = Vec::with_capacity(m);
        let mut fresh_noise_diag = DMatrix::zeros(q * m, q * m);
        for (slot, &j) in fresh_agents.iter().enumerate() {
            fresh_map
                .rows_mut(slot * q, q)
                .copy_from(model.observation(j));
            fresh_noise.push(model.noise_cov(j).clone());
            fresh_noise_diag
                .view_mut((slot * q, slot * q), (q, q))
                .copy_from(model.noise_cov(j));
        }
        let fresh_cross = &window_cov * fresh_map.transpose();
        let fresh_gain = linalg::right_divide_sym(
            &fresh_cross,
            &(&fresh_map * &fresh_cross + fresh_noise_diag),
        );
        let own_gain = fresh_gain.columns(0, q).into_owned();
        let relay_gain = fresh_gain.columns(q, q * (m - 1)).into_owned();
        let propagate = linalg::right_divide_square(
            &(DMatrix::identity(p, p) - &fresh_gain * &fresh_map),
            &window_blend,
        )
        .map_err(|e| {
            Error::BuildFailure(format!(
                "agent {i}: windowed blend is not invertible ({e})"
            ))
        })?;
        let forget_gain = &propagate * &snapshot_blend * &snapshot_gain;
        let steady_cov = linalg::psd_project(
            &linalg::symmetrize(&(&propagate * &window_blend * &window_cov)),
            &format!("steady error covariance (agent {i})"),
        )?;
        agents.push(SdolAgentWeights {
            propagate,
            own_gain,
            relay_gain,
            forget_gain,
            window_gain,
            window_blend,
            snapshot_blend,
            window_cov,
            steady_cov,
            window_map,
            window_noise,
            fresh_map,
            fresh_noise,
            window_pattern,
            arrivals,
            eccentricity: kappa,
        });
    }
    Ok(SdolWeights {
        topology: topo.clone(),
        window,
        state_dim: p,
        measurement_dim: q,
        snapshot_gain,
        snapshot_cov,
        agents,
    })
}

/// Sliding store of the last `window` full-network measurement stacks.
///
/// Slots cycle by round: a measurement taken at round `τ` lives in slot
/// `τ mod window`. Within a round the caller must record the relayed
/// arrivals first, then read [`Self::expiring`], then record the own fresh
/// measurement — the fresh measurement reuses the expiring round's slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SdolMemory {
    window: usize,
    measurement_dim: usize,
    slots: Vec<DVector<f64>>,
}

impl SdolMemory {
    pub fn new(window: usize, agent_count: usize, measurement_dim: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidWindow("memory needs at least one slot".into()));
        }
        if agent_count == 0 || measurement_dim == 0 {
            return Err(Error::InvalidSize(
                "memory needs at least one agent and one measurement component".into(),
            ));
        }
        Ok(SdolMemory {
            window,
            measurement_dim,
            slots: vec![DVector::zeros(agent_count * measurement_dim); window],
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Stores the measurement `agent` took at round `time`.
    pub fn record(&mut self, agent: usize, time: usize, y: &DVector<f64>) {
        assert_eq!(y.len(), self.measurement_dim, "measurement size mismatch");
        assert!(time >= 1, "rounds are 1-based");
        let q = self.measurement_dim;
        self.slots[time % self.window]
            .rows_mut((agent - 1) * q, q)
            .copy_from(y);
    }

    /// The full-network stack from `window` rounds before `t` — zeros while
    /// that round predates the start. Valid once the round-`t` relays are
    /// recorded and until the round-`t` own measurement overwrites the slot.
    pub fn expiring(&self, t: usize) -> &DVector<f64> {
        &self.slots[t % self.window]
    }
}

/// Runs the windowed estimator over one trace: every round each agent folds
/// in its own measurement and the relayed arrivals, and subtracts the
/// expiring round via the precomputed correction. Estimates start at zero
/// and rounds before the window fills treat missing measurements as zeros.
pub fn sdol_run(weights: &SdolWeights, trace: &MeasurementTrace) -> Result<EstimateTrajectory> {
    if trace.agent_count() != weights.agent_count() {
        return Err(Error::InvalidInput(format!(
            "trace covers {} agents, weights cover {}",
            trace.agent_count(),
            weights.agent_count()
        )));
    }
    let m = weights.agent_count();
    let p = weights.state_dim();
    let q = weights.measurement_dim();
    let mut memories: Vec<SdolMemory> = (0..m)
        .map(|_| SdolMemory::new(weights.window(), m, q))
        .collect::<Result<Vec<_>>>()?;
    let mut estimates: Vec<Vec<DVector<f64>>> = (0..m)
        .map(|_| {
            let mut rounds = Vec::with_capacity(trace.horizon() + 1);
            rounds.push(DVector::zeros(p));
            rounds
        })
        .collect();
    for t in 1..=trace.horizon() {
        for i in 1..=m {
            let aw = weights.agent(i);
            let memory = &mut memories[i - 1];
            let mut relays = DVector::zeros(q * aw.arrivals.len());
            for (slot, &(j, lag)) in aw.arrivals.iter().enumerate() {
                if t > lag {
                    let y = trace.measurement(j, t - lag);
                    relays.rows_mut(slot * q, q).copy_from(y);
                    memory.record(j, t - lag, y);
                }
            }
            let expiring = memory.expiring(t).clone();
            memory.record(i, t, trace.measurement(i, t));
            let previous = &estimates[i - 1][t - 1];
            let update = aw.propagate() * previous
                + aw.own_gain() * trace.measurement(i, t)
                + aw.relay_gain() * relays
                - aw.forget_gain() * expiring;
            estimates[i - 1].push(update);
        }
    }
    EstimateTrajectory::new("sdol", estimates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{folded_normal_stds, random_world, sample_trace, WorldModel};
    use crate::oracle::{batch_mmse, oracle_information_set};
    use crate::rng::derive_seed;
    use crate::topology::{make_topology, TopologyKind};
    use approx::assert_abs_diff_eq;

    fn zero_mean_world(m: usize, p: usize, q: usize, seed: u64) -> WorldModel {
        let stds = folded_normal_stds(m, 1.0, seed).unwrap();
        random_world(p, q, &stds, seed).unwrap()
    }

    fn rel_close(a: &DVector<f64>, b: &DVector<f64>, rel: f64) -> bool {
        (a - b).norm() <= rel * b.norm().max(1.0)
    }

    #[test]
    fn snapshot_gain_on_two_agents_is_one_third_each() {
        let topo = make_topology(TopologyKind::Line, 2, None).unwrap();
        let model = WorldModel::scalar_network(2, 1.0, 1.0).unwrap();
        let weights = sdol_weights(&topo, &model, 2).unwrap();
        assert_abs_diff_eq!(weights.snapshot_gain()[(0, 0)], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(weights.snapshot_gain()[(0, 1)], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn overwhelming_noise_zeroes_the_memory_correction() {
        let topo = make_topology(TopologyKind::Line, 3, None).unwrap();
        let model = WorldModel::scalar_network(3, 1.0, 1e6).unwrap();
        let weights = sdol_weights(&topo, &model, 3).unwrap();
        assert!(weights.snapshot_gain().norm() < 1e-4);
        for i in 1..=3 {
            assert!(weights.agent(i).forget_gain().norm() < 1e-4);
        }
    }

    #[test]
    fn window_shallower_than_the_network_is_rejected() {
        let topo = make_topology(TopologyKind::Line, 5, None).unwrap();
        let model = zero_mean_world(5, 2, 1, 7);
        match sdol_weights(&topo, &model, 3) {
            Err(Error::InvalidWindow(msg)) => assert!(msg.contains("spread 4"), "{msg}"),
            other => panic!("expected a window error, got {other:?}"),
        }
        assert!(matches!(
            sdol_weights(&topo, &model, 0),
            Err(Error::InvalidWindow(_))
        ));
    }

    #[test]
    fn nonzero_prior_mean_is_rejected() {
        let topo = make_topology(TopologyKind::Line, 2, None).unwrap();
        let base = zero_mean_world(2, 2, 1, 8);
        let shifted = WorldModel::new(
            DVector::from_element(2, 1.0),
            base.prior_cov().clone(),
            (1..=2).map(|i| base.observation(i).clone()).collect(),
            (1..=2).map(|i| base.noise_cov(i).clone()).collect(),
        )
        .unwrap();
        assert!(matches!(
            sdol_weights(&topo, &shifted, 2),
            Err(Error::UnsupportedPrior(_))
        ));
    }

    #[test]
    fn weights_are_deterministic() {
        let topo = make_topology(TopologyKind::Star, 4, None).unwrap();
        let model = zero_mean_world(4, 2, 1, 9);
        let first = sdol_weights(&topo, &model, 4).unwrap();
        let second = sdol_weights(&topo, &model, 4).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn tight_window_with_thin_measurements_fails_the_build() {
        // At the minimum legal window the far agents' windowed history
        // holds a single scalar measurement, which cannot pin a
        // two-dimensional state: the blend is structurally rank-deficient
        // and the build must refuse with a conditioning report.
        let topo = make_topology(TopologyKind::Line, 3, None).unwrap();
        let model = zero_mean_world(3, 2, 1, 10);
        match sdol_weights(&topo, &model, 2) {
            Err(Error::BuildFailure(msg)) => {
                assert!(msg.contains("condition number"), "{msg}")
            }
            other => panic!("expected a build failure, got {other:?}"),
        }
    }

    #[test]
    fn full_window_round_matches_the_full_oracle() {
        let topo = make_topology(TopologyKind::Line, 4, None).unwrap();
        let model = zero_mean_world(4, 2, 1, 11);
        let window = 4; // spread 3, one round of slack
        let weights = sdol_weights(&topo, &model, window).unwrap();
        let trace = sample_trace(&model, window, 12).unwrap();
        let trajectory = sdol_run(&weights, &trace).unwrap();
        let hops = topo.hop_structure();
        for i in 1..=4 {
            let info = oracle_information_set(&hops, i, window, None).unwrap();
            let (expected, _) = batch_mmse(&model, &info, &trace).unwrap();
            assert!(
                rel_close(trajectory.estimate(i, window), &expected, 1e-6),
                "agent {i} differs from the full oracle at the window boundary"
            );
        }
    }

    #[test]
    fn steady_rounds_match_the_windowed_oracle() {
        let topo = make_topology(TopologyKind::Line, 4, None).unwrap();
        let model = zero_mean_world(4, 2, 1, 13);
        let window = 4;
        let horizon = 7;
        let weights = sdol_weights(&topo, &model, window).unwrap();
        let trace = sample_trace(&model, horizon, 14).unwrap();
        let trajectory = sdol_run(&weights, &trace).unwrap();
        let hops = topo.hop_structure();
        for t in window..=horizon {
            for i in 1..=4 {
                let info = oracle_information_set(&hops, i, t, Some(window)).unwrap();
                let (expected, _) = batch_mmse(&model, &info, &trace).unwrap();
                assert!(
                    rel_close(trajectory.estimate(i, t), &expected, 1e-6),
                    "agent {i} differs from the windowed oracle at round {t}"
                );
            }
        }
    }

    #[test]
    fn warmup_rounds_fall_short_of_the_full_oracle() {
        // Before the window fills, the update treats the missing past as
        // zero measurements, which is deliberately sub-optimal.
        let topo = make_topology(TopologyKind::Line, 4, None).unwrap();
        let model = zero_mean_world(4, 2, 1, 15);
        let window = 4;
        let weights = sdol_weights(&topo, &model, window).unwrap();
        let trace = sample_trace(&model, window, 16).unwrap();
        let trajectory = sdol_run(&weights, &trace).unwrap();
        let hops = topo.hop_structure();
        let t = window - 1;
        let mut worst: f64 = 0.0;
        for i in 1..=4 {
            let info = oracle_information_set(&hops, i, t, None).unwrap();
            let (optimal, _) = batch_mmse(&model, &info, &trace).unwrap();
            let gap = (trajectory.estimate(i, t) - &optimal).norm() / optimal.norm().max(1.0);
            worst = worst.max(gap);
        }
        assert!(
            worst > 1e-6,
            "warm-up estimates unexpectedly optimal (worst gap {worst:.3e})"
        );
    }

    #[test]
    fn steady_covariance_equals_the_fresh_update_posterior() {
        // Two routes to the steady error covariance: the blended product
        // stored in the weights, and the direct posterior of the fresh-round
        // update on the windowed covariance.
        let topo = make_topology(TopologyKind::Star, 4, None).unwrap();
        let model = zero_mean_world(4, 2, 1, 17);
        let weights = sdol_weights(&topo, &model, 3).unwrap();
        for i in 1..=4 {
            let aw = weights.agent(i);
            let cross = aw.window_cov() * aw.fresh_map().transpose();
            let innovation = aw.fresh_map() * &cross
                + linalg::block_diag(aw.fresh_noise());
            let gain = linalg::right_divide_sym(&cross, &innovation);
            let direct = (DMatrix::identity(2, 2) - gain * aw.fresh_map()) * aw.window_cov();
            assert!(
                (aw.steady_cov() - &direct).norm() <= 1e-9 * direct.norm().max(1.0),
                "agent {i}: steady covariance disagrees with the direct posterior"
            );
        }
    }

    #[test]
    fn steady_covariance_matches_the_windowed_oracle_posterior() {
        // The stored covariance must agree with the posterior of batch
        // conditioning on the same windowed measurement set, and the
        // running estimate with the conditional mean itself.
        let topo = make_topology(TopologyKind::Line, 3, None).unwrap();
        let model = zero_mean_world(3, 2, 1, 18);
        let window = 3;
        let horizon = 6;
        let weights = sdol_weights(&topo, &model, window).unwrap();
        let trace = sample_trace(&model, horizon, 23).unwrap();
        let trajectory = sdol_run(&weights, &trace).unwrap();
        let hops = topo.hop_structure();
        for i in 1..=3 {
            let info = oracle_information_set(&hops, i, horizon, Some(window)).unwrap();
            let (expected, posterior) = batch_mmse(&model, &info, &trace).unwrap();
            assert!(
                rel_close(trajectory.estimate(i, horizon), &expected, 1e-6),
                "agent {i} differs from the windowed oracle"
            );
            let cov = weights.agent(i).steady_cov();
            assert!(
                (cov - &posterior).norm() <= 1e-8 * posterior.norm().max(1.0),
                "agent {i}: stored covariance differs from the oracle posterior\n\
                 stored: {cov:.6}\noracle: {posterior:.6}"
            );
        }
    }

    #[test]
    fn steady_error_matches_the_analytic_covariance() {
        let topo = make_topology(TopologyKind::Line, 3, None).unwrap();
        let model = zero_mean_world(3, 2, 1, 18);
        let window = 3;
        let horizon = 6;
        let weights = sdol_weights(&topo, &model, window).unwrap();
        let trials = 1600;
        let master = 19;
        let mut squared: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); 3];
        for k in 0..trials {
            let trace =
                sample_trace(&model, horizon, derive_seed(master, &[k as u64])).unwrap();
            let trajectory = sdol_run(&weights, &trace).unwrap();
            let errors = trajectory.squared_errors(trace.state());
            for i in 1..=3 {
                squared[i - 1].push(errors[i - 1][horizon]);
            }
        }
        for i in 1..=3 {
            let samples = &squared[i - 1];
            let mean = samples.iter().sum::<f64>() / trials as f64;
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
                / (trials as f64 - 1.0);
            let stderr = (var / trials as f64).sqrt();
            let predicted = weights.agent(i).steady_cov().trace();
            assert!(
                (mean - predicted).abs() <= 3.0 * stderr,
                "agent {i}: empirical {mean:.4} vs predicted {predicted:.4} (stderr {stderr:.4})"
            );
        }
    }

    #[test]
    fn memory_warm_start_reads_zeros() {
        let mut memory = SdolMemory::new(3, 2, 1).unwrap();
        // Round 1 with nothing recorded yet: the expiring round (-2) reads
        // as zeros.
        assert_eq!(memory.expiring(1).norm(), 0.0);
        memory.record(1, 1, &DVector::from_element(1, 5.0));
        assert_eq!(memory.expiring(2).norm(), 0.0);
    }

    #[test]
    fn memory_slots_cycle_in_record_read_order() {
        let mut memory = SdolMemory::new(2, 2, 1).unwrap();
        // Rounds 1 and 2 fill both agents' entries.
        memory.record(1, 1, &DVector::from_element(1, 11.0));
        memory.record(2, 1, &DVector::from_element(1, 21.0));
        memory.record(1, 2, &DVector::from_element(1, 12.0));
        memory.record(2, 2, &DVector::from_element(1, 22.0));
        // At round 3 the expiring stack is round 1, read before recording
        // the fresh round-3 measurement into the same slot.
        let expiring = memory.expiring(3).clone();
        assert_eq!(expiring[0], 11.0);
        assert_eq!(expiring[1], 21.0);
        memory.record(1, 3, &DVector::from_element(1, 13.0));
        assert_eq!(memory.expiring(4)[1], 22.0);
    }

    #[test]
    fn boundary_arrival_lands_in_the_expiring_slot() {
        // With the window equal to the hop distance, a relayed measurement
        // arrives exactly when its round expires: recording it first makes
        // it visible to the same round's read.
        let mut memory = SdolMemory::new(2, 2, 1).unwrap();
        memory.record(1, 1, &DVector::from_element(1, 11.0));
        // Round 3: agent 2's round-1 measurement arrives over 2 hops.
        memory.record(2, 1, &DVector::from_element(1, 21.0));
        let expiring = memory.expiring(3);
        assert_eq!(expiring[0], 11.0);
        assert_eq!(expiring[1], 21.0);
    }

    #[test]
    fn run_rejects_mismatched_traces() {
        let topo = make_topology(TopologyKind::Line, 3, None).unwrap();
        let model = zero_mean_world(3, 2, 1, 20);
        let weights = sdol_weights(&topo, &model, 3).unwrap();
        let other = zero_mean_world(4, 2, 1, 21);
        let trace = sample_trace(&other, 3, 22).unwrap();
        assert!(sdol_run(&weights, &trace).is_err());
    }
}
