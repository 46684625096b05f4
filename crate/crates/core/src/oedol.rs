//! Estimate-exchange protocol for tree networks.
//!
//! Instead of relaying raw measurements, each agent broadcasts one
//! state-sized message per round — the shift of its own estimate — and its
//! neighbours recover the new information in that message exactly. The
//! weights that make the recovery exact depend only on the graph and the
//! measurement model, never on data, so they are synthesised once
//! ([`oedol_schedule`]) and the online pass ([`oedol_run`]) is a fixed
//! linear recursion per agent per round.
//!
//! Exactness holds on trees: every message an agent receives can be cleaned
//! of the echo of its own earlier broadcasts, because on a tree the only
//! route its past message can come back is straight from the neighbour it
//! was sent to. The synthesis therefore refuses graphs with cycles.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::linalg;
use crate::model::{MeasurementTrace, WorldModel};
use crate::oracle::EstimateTrajectory;
use crate::topology::NetworkTopology;
use crate::{Error, Result};

/// One agent's weights for one round, plus the carried synthesis state.
///
/// Block layouts follow the agent's ascending neighbour list: the gain on
/// received messages, the echo corrections, and the incoming-message model
/// all use one state-sized block per neighbour, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OedolStep {
    /// Combination applied to the agent's previous estimate, `p×p`.
    propagate: DMatrix<f64>,
    /// Gain on the agent's own fresh measurement, `p×q`.
    own_gain: DMatrix<f64>,
    /// Gain on the stacked neighbour innovations, `p × p·π_i`.
    exchange_gain: DMatrix<f64>,
    /// Stacked correction that removes the echo of the agent's own
    /// two-rounds-old message from the received bundle, `p·π_i × p`.
    message_echo: DMatrix<f64>,
    /// Block-diagonal correction that restores the older innovation content
    /// the echo removal would otherwise cancel, `p·π_i × p·π_i`.
    innovation_echo: DMatrix<f64>,
    /// Linear map from the state to the innovation content of the messages
    /// this agent will receive next round, `p·π_i × p`.
    incoming_map: DMatrix<f64>,
    /// Per-neighbour noise covariance blocks of those messages, each `p×p`.
    incoming_noise: Vec<DMatrix<f64>>,
    /// Error covariance of the agent's estimate after this round, `p×p`.
    error_cov: DMatrix<f64>,
}

impl OedolStep {
    pub fn propagate(&self) -> &DMatrix<f64> {
        &self.propagate
    }

    pub fn own_gain(&self) -> &DMatrix<f64> {
        &self.own_gain
    }

    pub fn exchange_gain(&self) -> &DMatrix<f64> {
        &self.exchange_gain
    }

    pub fn message_echo(&self) -> &DMatrix<f64> {
        &self.message_echo
    }

    pub fn innovation_echo(&self) -> &DMatrix<f64> {
        &self.innovation_echo
    }

    pub fn incoming_map(&self) -> &DMatrix<f64> {
        &self.incoming_map
    }

    pub fn incoming_noise(&self) -> &[DMatrix<f64>] {
        &self.incoming_noise
    }

    pub fn error_cov(&self) -> &DMatrix<f64> {
        &self.error_cov
    }
}

/// Data-independent weight schedule for the estimate-exchange protocol:
/// one [`OedolStep`] per agent per round, plus the tree it was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OedolSchedule {
    topology: NetworkTopology,
    horizon: usize,
    state_dim: usize,
    measurement_dim: usize,
    prior_mean: DVector<f64>,
    /// `steps[i-1][t-1]` = agent i's round-t step.
    steps: Vec<Vec<OedolStep>>,
}

impl OedolSchedule {
    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

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
    pub fn step(&self, agent: usize, t: usize) -> &OedolStep {
        &self.steps[agent - 1][t - 1]
    }

    pub(crate) fn steps_raw(&self) -> &[Vec<OedolStep>] {
        &self.steps
    }

    pub(crate) fn from_parts(
        topology: NetworkTopology,
        horizon: usize,
        state_dim: usize,
        measurement_dim: usize,
        prior_mean: DVector<f64>,
        steps: Vec<Vec<OedolStep>>,
    ) -> Self {
        OedolSchedule {
            topology,
            horizon,
            state_dim,
            measurement_dim,
            prior_mean,
            steps,
        }
    }
}

/// Outcome of the per-agent gain solve within one synthesis round.
struct RoundGain {
    own_gain: DMatrix<f64>,
    exchange_gain: DMatrix<f64>,
    propagate: DMatrix<f64>,
    error_cov: DMatrix<f64>,
}

/// First edge of `topo` whose removal is survived by a spanning tree — the
/// witness that the graph has a cycle.
fn cycle_edge(topo: &NetworkTopology) -> Option<(usize, usize)> {
    let tree = topo.spanning_tree();
    topo.edges()
        .iter()
        .find(|e| !tree.edges().contains(e))
        .copied()
}

/// Synthesises the full weight schedule for `horizon` rounds on `tree`.
/// Purely a function of topology and model — no measurement data involved.
///
/// Each round first solves every agent's joint gain over its own fresh
/// measurement and the incoming message bundle, then assembles the echo
/// corrections and the next round's incoming-message model from all agents'
/// fresh gains. Rounds are sequential; agents within a round are
/// independent and solved in parallel.
pub fn oedol_schedule(
    tree: &NetworkTopology,
    model: &WorldModel,
    horizon: usize,
) -> Result<OedolSchedule> {
    if horizon == 0 {
        return Err(Error::InvalidSize("horizon must be at least 1".into()));
    }
    if tree.agent_count() != model.agent_count() {
        return Err(Error::InvalidInput(format!(
            "topology has {} agents, model has {}",
            tree.agent_count(),
            model.agent_count()
        )));
    }
    if !tree.is_tree() {
        let detail = match cycle_edge(tree) {
            Some((a, b)) => format!("edge {a}-{b} closes a cycle"),
            None => "the graph is not a tree".into(),
        };
        return Err(Error::NotATree(format!(
            "estimate-exchange weights exist only on trees: {detail}"
        )));
    }
    let m = tree.agent_count();
    let p = model.state_dim();
    let q = model.measurement_dim();
    let mut steps: Vec<Vec<OedolStep>> = (0..m).map(|_| Vec::with_capacity(horizon)).collect();
    for t in 1..=horizon {
        // Joint gain over the own measurement and the message bundle; the
        // message part of the system is all-zero in round one and the
        // pseudo-inverse fallback then yields exactly zero exchange gains.
        let gains = (1..=m)
            .into_par_iter()
            .map(|i| -> Result<RoundGain> {
                let deg = tree.degree(i);
                let prev = (t >= 2).then(|| &steps[i - 1][t - 2]);
                let zero_map = DMatrix::zeros(p * deg, p);
                let incoming_map = prev.map_or(&zero_map, |s| &s.incoming_map);
                let prior = prev.map_or(model.prior_cov(), |s| &s.error_cov);
                let mut noise_blocks = Vec::with_capacity(1 + deg);
                noise_blocks.push(model.noise_cov(i).clone());
                match prev {
                    Some(s) => noise_blocks.extend(s.incoming_noise.iter().cloned()),
                    None => noise_blocks.extend((0..deg).map(|_| DMatrix::zeros(p, p))),
                }
                let joint_map =
                    linalg::vstack(&[model.observation(i).clone(), incoming_map.clone()]);
                let joint_noise = linalg::block_diag(&noise_blocks);
                let cross = prior * joint_map.transpose();
                let innovation_cov = &joint_map * &cross + joint_noise;
                let gain = linalg::right_divide_sym(&cross, &innovation_cov);
                let own_gain = gain.columns(0, q).into_owned();
                let exchange_gain = gain.columns(q, p * deg).into_owned();
                let propagate = DMatrix::identity(p, p)
                    - &own_gain * model.observation(i)
                    - &exchange_gain * incoming_map;
                let error_cov = linalg::psd_project(
                    &(&propagate * prior),
                    &format!("exchange error covariance (agent {i}, round {t})"),
                )?;
                Ok(RoundGain {
                    own_gain,
                    exchange_gain,
                    propagate,
                    error_cov,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        // Echo corrections and the next incoming-message model need every
        // agent's fresh gain, so they are assembled in a second pass.
        let mut new_steps = Vec::with_capacity(m);
        for i in 1..=m {
            let nbrs = tree.neighbours(i);
            let gain_i = &gains[i - 1];
            let mut echo_blocks = Vec::with_capacity(nbrs.len());
            let mut restore_blocks = Vec::with_capacity(nbrs.len());
            let mut map_blocks = Vec::with_capacity(nbrs.len());
            let mut noise_blocks = Vec::with_capacity(nbrs.len());
            for &j in nbrs {
                let gain_j = &gains[j - 1];
                let deg_j = tree.degree(j);
                let my_slot = tree
                    .neighbour_position(j, i)
                    .expect("edges are symmetric");
                let j_slot = tree
                    .neighbour_position(i, j)
                    .expect("edges are symmetric");
                // Block of j's exchange gain that acts on this agent's
                // message.
                let echo = gain_j.exchange_gain.columns(my_slot * p, p).into_owned();
                let prev_j = (t >= 2).then(|| &steps[j - 1][t - 2]);
                let prev_i = (t >= 2).then(|| &steps[i - 1][t - 2]);
                let own_echo_prev = match prev_i {
                    Some(s) => s.exchange_gain.columns(j_slot * p, p).into_owned(),
                    None => DMatrix::zeros(p, p),
                };
                restore_blocks.push(&echo * own_echo_prev);
                let map_j_prev = match prev_j {
                    Some(s) => s.incoming_map.clone(),
                    None => DMatrix::zeros(p * deg_j, p),
                };
                let noise_j_prev: Vec<DMatrix<f64>> = match prev_j {
                    Some(s) => s.incoming_noise.clone(),
                    None => (0..deg_j).map(|_| DMatrix::zeros(p, p)).collect(),
                };
                // What j's next message will look like to this agent: j's
                // fresh gains applied to j's information, minus the part
                // fed by this agent's own previous message.
                let map_block = &gain_j.own_gain * model.observation(j)
                    + &gain_j.exchange_gain * &map_j_prev
                    - &echo * map_j_prev.rows(my_slot * p, p);
                let stacked_noise_j = linalg::block_diag(&noise_j_prev);
                let noise_block = &gain_j.own_gain
                    * model.noise_cov(j)
                    * gain_j.own_gain.transpose()
                    + &gain_j.exchange_gain * stacked_noise_j * gain_j.exchange_gain.transpose()
                    - &echo * &noise_j_prev[my_slot] * echo.transpose();
                echo_blocks.push(echo);
                map_blocks.push(map_block);
                noise_blocks.push(noise_block);
            }
            new_steps.push(OedolStep {
                propagate: gain_i.propagate.clone(),
                own_gain: gain_i.own_gain.clone(),
                exchange_gain: gain_i.exchange_gain.clone(),
                message_echo: linalg::vstack(&echo_blocks),
                innovation_echo: linalg::block_diag(&restore_blocks),
                incoming_map: linalg::vstack(&map_blocks),
                incoming_noise: noise_blocks,
                error_cov: gain_i.error_cov.clone(),
            });
        }
        for (slot, step) in new_steps.into_iter().enumerate() {
            steps[slot].push(step);
        }
    }
    Ok(OedolSchedule::from_parts(
        tree.clone(),
        horizon,
        p,
        q,
        model.prior_mean().clone(),
        steps,
    ))
}

/// Every message broadcast during a run: `messages[i-1][t-1]` is the vector
/// agent `i` sent at round `t`, identical for all of its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageLog {
    state_dim: usize,
    messages: Vec<Vec<DVector<f64>>>,
}

impl MessageLog {
    pub fn agent_count(&self) -> usize {
        self.messages.len()
    }

    pub fn horizon(&self) -> usize {
        self.messages[0].len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// The message `sender` broadcast at round `t` (1-based).
    pub fn message(&self, sender: usize, t: usize) -> &DVector<f64> {
        &self.messages[sender - 1][t - 1]
    }

    /// Writes rows `trial,sender,t,component,value` (components 1-based).
    pub fn write_csv(&self, out: &mut dyn Write, trial: usize) -> Result<()> {
        for sender in 1..=self.agent_count() {
            for t in 1..=self.horizon() {
                let s = self.message(sender, t);
                for c in 0..s.len() {
                    writeln!(out, "{trial},{sender},{t},{},{}", c + 1, s[c])?;
                }
            }
        }
        Ok(())
    }
}

/// CSV header matching [`MessageLog::write_csv`].
pub const MESSAGE_CSV_HEADER: &str = "trial,sender,t,component,value";

/// Runs the exchange protocol over one trace: synchronous rounds in which
/// every agent ingests its own measurement and its neighbours' previous
/// messages, cleans the received bundle of its own echo, updates its
/// estimate, and broadcasts the shift of that estimate.
pub fn oedol_run(
    schedule: &OedolSchedule,
    trace: &MeasurementTrace,
) -> Result<(EstimateTrajectory, MessageLog)> {
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
    let topo = schedule.topology();
    let m = schedule.agent_count();
    let p = schedule.state_dim();
    let mut estimates: Vec<Vec<DVector<f64>>> = (0..m)
        .map(|_| {
            let mut rounds = Vec::with_capacity(trace.horizon() + 1);
            rounds.push(schedule.prior_mean().clone());
            rounds
        })
        .collect();
    let mut log: Vec<Vec<DVector<f64>>> = (0..m).map(|_| Vec::new()).collect();
    // Message and innovation history, one and two rounds back (zero before
    // the first broadcast).
    let mut sent_prev: Vec<DVector<f64>> = vec![DVector::zeros(p); m];
    let mut sent_prev2: Vec<DVector<f64>> = vec![DVector::zeros(p); m];
    let mut innov_prev: Vec<DVector<f64>> =
        (1..=m).map(|i| DVector::zeros(p * topo.degree(i))).collect();
    let mut innov_prev2 = innov_prev.clone();
    for t in 1..=trace.horizon() {
        let mut sent_now = Vec::with_capacity(m);
        let mut innov_now = Vec::with_capacity(m);
        for i in 1..=m {
            let step = schedule.step(i, t);
            let mut received = DVector::zeros(p * topo.degree(i));
            for (slot, &j) in topo.neighbours(i).iter().enumerate() {
                received
                    .rows_mut(slot * p, p)
                    .copy_from(&sent_prev[j - 1]);
            }
            let innovation = if t >= 2 {
                let last = schedule.step(i, t - 1);
                received - last.message_echo() * &sent_prev2[i - 1]
                    + last.innovation_echo() * &innov_prev2[i - 1]
            } else {
                received
            };
            let previous = &estimates[i - 1][t - 1];
            let update = step.propagate() * previous
                + step.own_gain() * trace.measurement(i, t)
                + step.exchange_gain() * &innovation;
            let message = &update - step.propagate() * previous;
            estimates[i - 1].push(update);
            log[i - 1].push(message.clone());
            sent_now.push(message);
            innov_now.push(innovation);
        }
        sent_prev2 = std::mem::replace(&mut sent_prev, sent_now);
        innov_prev2 = std::mem::replace(&mut innov_prev, innov_now);
    }
    let trajectory = EstimateTrajectory::new("oedol", estimates)?;
    let log = MessageLog {
        state_dim: p,
        messages: log,
    };
    Ok((trajectory, log))
}
