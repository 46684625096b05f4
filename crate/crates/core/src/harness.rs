//! Monte Carlo experiment driver.
//!
//! An [`ExperimentConfig`] names a topology, a world model, a list of
//! algorithms, a horizon, and a trial budget under one master seed. Running
//! it samples independent measurement traces, feeds the *same* trace to
//! every algorithm (paired comparison), and accumulates the team cost
//! `Σ_i ‖x − u_{i,t}‖²` into cumulative and terminal cost curves with
//! per-trial standard errors.
//!
//! The scheduled estimators are nested in the horizon — the round-`t`
//! action does not depend on when the experiment ends — so a single
//! length-`T` run yields the cost curves for every shorter horizon at once.
//!
//! Trials are the unit of parallelism. Every random draw derives from the
//! master seed and the trial index, and reduction walks trials in index
//! order, so reports are byte-identical regardless of thread count.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{
    drls_run, relative_variance_combiner, CombinerMatrix, DEFAULT_FORGETTING, DEFAULT_RIDGE,
};
use crate::model::{folded_normal_stds, random_world, sample_trace, MeasurementTrace, WorldModel};
use crate::oedol::{oedol_run, oedol_schedule, OedolSchedule};
use crate::oracle::{arrival_set, odol_run, odol_schedule, EstimateTrajectory, OdolSchedule};
use crate::rng::{derive_seed, stream};
use crate::schedule_io::WeightSchedule;
use crate::sdol::{sdol_run, sdol_weights, SdolWeights};
use crate::topology::{make_topology, NetworkTopology, TopologyKind};
use crate::{Error, Result};

/// Header of the long-format cost CSV.
pub const COST_CSV_HEADER: &str = "metric,algorithm,topology,T,value,stderr";

fn default_forgetting() -> f64 {
    DEFAULT_FORGETTING
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

/// Which graph an algorithm runs on: the configured topology itself, or its
/// canonical spanning tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphChoice {
    #[default]
    Original,
    SpanningTree,
}

/// The communication graph of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub agents: usize,
    /// Wiring seed; required for (and only used by) random graphs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// The world model of one experiment: state and measurement dimensions plus
/// the scale of the folded-normal noise levels. The concrete maps and noise
/// draws derive from the master seed, so two configs that differ only in
/// topology share the exact same model and traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub state_dim: usize,
    pub measurement_dim: usize,
    pub noise_scale: f64,
}

/// One algorithm entry of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Odol {
        #[serde(default)]
        graph: GraphChoice,
    },
    Oedol {
        #[serde(default)]
        graph: GraphChoice,
    },
    Sdol {
        window: usize,
        #[serde(default)]
        graph: GraphChoice,
    },
    Drls {
        #[serde(default = "default_forgetting")]
        forgetting: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
        #[serde(default)]
        graph: GraphChoice,
    },
}

impl AlgorithmSpec {
    /// Report label; windowed runs carry their depth so several windows can
    /// share one experiment.
    pub fn label(&self) -> String {
        match self {
            AlgorithmSpec::Odol { .. } => "odol".into(),
            AlgorithmSpec::Oedol { .. } => "oedol".into(),
            AlgorithmSpec::Sdol { window, .. } => format!("sdol{window}"),
            AlgorithmSpec::Drls { .. } => "drls".into(),
        }
    }

    pub fn graph(&self) -> GraphChoice {
        match self {
            AlgorithmSpec::Odol { graph }
            | AlgorithmSpec::Oedol { graph }
            | AlgorithmSpec::Sdol { graph, .. }
            | AlgorithmSpec::Drls { graph, .. } => *graph,
        }
    }
}

/// A complete, serializable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub topology: TopologySpec,
    pub model: ModelSpec,
    pub algorithms: Vec<AlgorithmSpec>,
}

impl ExperimentConfig {
    /// Label under which a run of `spec` appears in reports and file names:
    /// the topology kind, suffixed when the algorithm runs on the spanning
    /// tree instead of the original graph.
    pub fn topology_label(&self, spec: &AlgorithmSpec) -> String {
        match spec.graph() {
            GraphChoice::Original => self.topology.kind.to_string(),
            GraphChoice::SpanningTree => format!("{}_spanning_tree", self.topology.kind),
        }
    }

    /// Checks every field before any computation starts.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trial count must be at least 1".into()));
        }
        if self.topology.agents < 2 {
            return Err(Error::InvalidConfig(format!(
                "a network experiment needs at least 2 agents, got {}",
                self.topology.agents
            )));
        }
        if self.topology.kind == TopologyKind::Random && self.topology.seed.is_none() {
            return Err(Error::InvalidConfig(
                "random topology requires topology.seed".into(),
            ));
        }
        if self.model.state_dim == 0 || self.model.measurement_dim == 0 {
            return Err(Error::InvalidConfig(
                "state and measurement dimensions must be at least 1".into(),
            ));
        }
        if !(self.model.noise_scale > 0.0) || !self.model.noise_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise scale {} must be positive and finite",
                self.model.noise_scale
            )));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig(
                "experiment needs at least one algorithm".into(),
            ));
        }
        let mut seen = HashSet::new();
        for spec in &self.algorithms {
            if let AlgorithmSpec::Sdol { window, .. } = spec {
                if *window == 0 {
                    return Err(Error::InvalidConfig("sdol window must be at least 1".into()));
                }
            }
            if let AlgorithmSpec::Drls {
                forgetting, ridge, ..
            } = spec
            {
                if !(*forgetting > 0.0 && *forgetting <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "drls forgetting factor {forgetting} is outside (0, 1]"
                    )));
                }
                if !(*ridge > 0.0) || !ridge.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "drls ridge {ridge} must be positive and finite"
                    )));
                }
            }
            if !seen.insert((spec.label(), spec.graph())) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate algorithm entry '{}'",
                    spec.label()
                )));
            }
        }
        Ok(())
    }
}

/// Sample mean and standard error of that mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

fn stat_of(samples: &[f64]) -> Stat {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Stat { mean, stderr }
}

/// An algorithm that could not run on the configured graph, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRun {
    pub algorithm: String,
    pub topology: String,
    pub reason: String,
}

/// Cost curves of one algorithm over all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmReport {
    algorithm: String,
    topology: String,
    /// `[trial][t-1]`: team cost of round `t` in one trial.
    round_costs: Vec<Vec<f64>>,
    cumulative: Vec<Stat>,
    terminal: Vec<Stat>,
    /// `[agent-1][t-1]`.
    agent_mse: Vec<Vec<Stat>>,
}

impl AlgorithmReport {
    pub fn algorithm(&self) -> &str {
        &self.algorithm
    }

    pub fn topology(&self) -> &str {
        &self.topology
    }

    /// Cumulative team cost through round `t` (1-based).
    pub fn cumulative_at(&self, t: usize) -> Stat {
        self.cumulative[t - 1]
    }

    /// Team cost of round `t` alone (1-based).
    pub fn terminal_at(&self, t: usize) -> Stat {
        self.terminal[t - 1]
    }

    pub fn agent_mse_at(&self, agent: usize, t: usize) -> Stat {
        self.agent_mse[agent - 1][t - 1]
    }

    /// Raw per-trial team cost of each round, `[trial][t-1]`.
    pub fn round_costs(&self) -> &[Vec<f64>] {
        &self.round_costs
    }

    /// Per-trial cumulative team cost through round `t`.
    pub fn trial_cumulative(&self, t: usize) -> Vec<f64> {
        self.round_costs
            .iter()
            .map(|row| row[..t].iter().sum())
            .collect()
    }

    /// Per-trial team cost of round `t` alone.
    pub fn trial_terminal(&self, t: usize) -> Vec<f64> {
        self.round_costs.iter().map(|row| row[t - 1]).collect()
    }
}

/// The result of one experiment: per-algorithm cost curves plus any
/// algorithms skipped as incompatible with the configured graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    horizon: usize,
    trials: usize,
    master_seed: u64,
    agent_count: usize,
    runs: Vec<AlgorithmReport>,
    skipped: Vec<SkippedRun>,
}

impl CostReport {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn runs(&self) -> &[AlgorithmReport] {
        &self.runs
    }

    pub fn skipped(&self) -> &[SkippedRun] {
        &self.skipped
    }

    /// First run whose algorithm label matches.
    pub fn run(&self, algorithm: &str) -> Option<&AlgorithmReport> {
        self.runs.iter().find(|r| r.algorithm == algorithm)
    }

    /// Writes every curve in the long format
    /// `metric,algorithm,topology,T,value,stderr`, one row per point.
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "{COST_CSV_HEADER}")?;
        for run in &self.runs {
            for t in 1..=self.horizon {
                let s = run.cumulative_at(t);
                writeln!(
                    out,
                    "J,{},{},{t},{},{}",
                    run.algorithm, run.topology, s.mean, s.stderr
                )?;
            }
            for t in 1..=self.horizon {
                let s = run.terminal_at(t);
                writeln!(
                    out,
                    "P,{},{},{t},{},{}",
                    run.algorithm, run.topology, s.mean, s.stderr
                )?;
            }
            for agent in 1..=self.agent_count {
                for t in 1..=self.horizon {
                    let s = run.agent_mse_at(agent, t);
                    writeln!(
                        out,
                        "mse_agent{agent},{},{},{t},{},{}",
                        run.algorithm, run.topology, s.mean, s.stderr
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Writes a JSON summary: config identity, per-run cost curves, and the
    /// skip annotations. Per-trial raw costs stay out of the file.
    pub fn write_json(&self, out: &mut dyn Write) -> Result<()> {
        #[derive(Serialize)]
        struct RunView<'a> {
            algorithm: &'a str,
            topology: &'a str,
            cumulative: &'a [Stat],
            terminal: &'a [Stat],
            agent_mse: &'a [Vec<Stat>],
        }
        #[derive(Serialize)]
        struct ReportView<'a> {
            horizon: usize,
            trials: usize,
            master_seed: u64,
            agent_count: usize,
            runs: Vec<RunView<'a>>,
            skipped: &'a [SkippedRun],
        }
        let view = ReportView {
            horizon: self.horizon,
            trials: self.trials,
            master_seed: self.master_seed,
            agent_count: self.agent_count,
            runs: self
                .runs
                .iter()
                .map(|r| RunView {
                    algorithm: &r.algorithm,
                    topology: &r.topology,
                    cumulative: &r.cumulative,
                    terminal: &r.terminal,
                    agent_mse: &r.agent_mse,
                })
                .collect(),
            skipped: &self.skipped,
        };
        serde_json::to_writer_pretty(&mut *out, &view)?;
        writeln!(out)?;
        Ok(())
    }
}

enum Engine {
    Odol(OdolSchedule),
    Oedol(OedolSchedule),
    Sdol(SdolWeights),
    Drls {
        graph: NetworkTopology,
        combiner: CombinerMatrix,
        forgetting: f64,
        ridge: f64,
    },
}

impl Engine {
    fn run(&self, model: &WorldModel, trace: &MeasurementTrace) -> Result<EstimateTrajectory> {
        match self {
            Engine::Odol(schedule) => odol_run(schedule, trace),
            Engine::Oedol(schedule) => oedol_run(schedule, trace).map(|(trajectory, _)| trajectory),
            Engine::Sdol(weights) => sdol_run(weights, trace),
            Engine::Drls {
                graph,
                combiner,
                forgetting,
                ridge,
            } => drls_run(graph, model, combiner, trace, *forgetting, *ridge),
        }
    }
}

struct PreparedRun {
    algorithm: String,
    topology_label: String,
    engine: Engine,
}

/// A precomputed weight schedule loaded from a file, tagged with the
/// algorithm and topology labels it is meant to serve.
#[derive(Debug, Clone)]
pub struct LoadedSchedule {
    pub algorithm: String,
    pub topology: String,
    pub schedule: WeightSchedule,
}

/// Checks a loaded schedule against the experiment it is about to serve and
/// wraps it as a ready-to-run engine. The weights must have been synthesised
/// for exactly this graph, model shape, and horizon; anything else is a
/// configuration error, not a silent substitute.
fn adopt_schedule(
    loaded: WeightSchedule,
    spec: &AlgorithmSpec,
    graph: &NetworkTopology,
    model: &WorldModel,
    horizon: usize,
) -> Result<Engine> {
    let label = spec.label();
    let reject =
        |what: String| Err(Error::InvalidConfig(format!("weights for {label}: {what}")));
    let check_dims = |p: usize, q: usize, m: usize| -> Result<()> {
        if p != model.state_dim() || q != model.measurement_dim() || m != model.agent_count() {
            return Err(Error::InvalidConfig(format!(
                "weights for {label}: built for p={p}, q={q}, m={m}, \
                 experiment uses p={}, q={}, m={}",
                model.state_dim(),
                model.measurement_dim(),
                model.agent_count()
            )));
        }
        Ok(())
    };
    match (loaded, spec) {
        (WeightSchedule::Odol(schedule), AlgorithmSpec::Odol { .. }) => {
            check_dims(
                schedule.state_dim(),
                schedule.measurement_dim(),
                schedule.agent_count(),
            )?;
            if schedule.horizon() != horizon {
                return reject(format!(
                    "covers {} rounds, experiment runs {horizon}",
                    schedule.horizon()
                ));
            }
            if schedule.prior_mean() != model.prior_mean() {
                return reject("prior mean differs from the model".into());
            }
            // The relay schedule does not carry the graph explicitly; its
            // arrival sets must reproduce the graph's hop pattern.
            let hops = graph.hop_structure();
            for i in 1..=graph.agent_count() {
                for t in 1..=horizon {
                    if schedule.step(i, t).delta() != arrival_set(&hops, i, t).as_slice() {
                        return reject(format!(
                            "arrival set of agent {i} at round {t} does not match the graph"
                        ));
                    }
                }
            }
            Ok(Engine::Odol(schedule))
        }
        (WeightSchedule::Oedol(schedule), AlgorithmSpec::Oedol { .. }) => {
            check_dims(
                schedule.state_dim(),
                schedule.measurement_dim(),
                schedule.agent_count(),
            )?;
            if schedule.horizon() != horizon {
                return reject(format!(
                    "covers {} rounds, experiment runs {horizon}",
                    schedule.horizon()
                ));
            }
            if schedule.prior_mean() != model.prior_mean() {
                return reject("prior mean differs from the model".into());
            }
            if schedule.topology() != graph {
                return reject("built for a different graph".into());
            }
            Ok(Engine::Oedol(schedule))
        }
        (WeightSchedule::Sdol(weights), AlgorithmSpec::Sdol { window, .. }) => {
            check_dims(
                weights.state_dim(),
                weights.measurement_dim(),
                weights.agent_count(),
            )?;
            if weights.window() != *window {
                return reject(format!(
                    "window depth {} differs from the configured {window}",
                    weights.window()
                ));
            }
            if weights.topology() != graph {
                return reject("built for a different graph".into());
            }
            Ok(Engine::Sdol(weights))
        }
        (other, _) => reject(format!("file carries {} weights", other.algorithm())),
    }
}

/// Runs the configured experiment and returns the cost report.
///
/// Synthesis failures of individual algorithms (such as estimate-exchange
/// weights on a graph with a cycle, or a window too shallow for the graph)
/// skip that algorithm with an annotation instead of failing the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<CostReport> {
    run_experiment_with(config, Vec::new())
}

/// Builds the topology, world model, and noise standard deviations an
/// experiment configuration describes. Every subcommand derives them through
/// this one function, so weight synthesis, verification, and simulation all
/// see the same world for the same configuration.
pub fn experiment_world(
    config: &ExperimentConfig,
) -> Result<(NetworkTopology, WorldModel, Vec<f64>)> {
    config.validate()?;
    let topo = make_topology(
        config.topology.kind,
        config.topology.agents,
        config.topology.seed,
    )?;
    let stds = folded_normal_stds(
        topo.agent_count(),
        config.model.noise_scale,
        config.master_seed,
    )?;
    let model = random_world(
        config.model.state_dim,
        config.model.measurement_dim,
        &stds,
        config.master_seed,
    )?;
    Ok((topo, model, stds))
}

/// Validates that a loaded schedule fits the experiment a configuration
/// describes — matching algorithm, graph, model shape, and horizon or window
/// depth — without running anything.
pub fn check_schedule_fits(config: &ExperimentConfig, loaded: &LoadedSchedule) -> Result<()> {
    let (topo, model, _) = experiment_world(config)?;
    let spec = config
        .algorithms
        .iter()
        .find(|s| s.label() == loaded.algorithm && config.topology_label(s) == loaded.topology)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "weights for {}@{} match no configured algorithm",
                loaded.algorithm, loaded.topology
            ))
        })?;
    let graph = match spec.graph() {
        GraphChoice::Original => topo,
        GraphChoice::SpanningTree => topo.spanning_tree(),
    };
    adopt_schedule(
        loaded.schedule.clone(),
        spec,
        &graph,
        &model,
        config.horizon,
    )
    .map(|_| ())
}

/// [`run_experiment`] with precomputed weight schedules. A schedule whose
/// `(algorithm, topology)` labels match a configured algorithm is validated
/// against the experiment and used in place of fresh synthesis; a schedule
/// that matches nothing, or matches but does not fit, fails the run.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    mut provided: Vec<LoadedSchedule>,
) -> Result<CostReport> {
    let (topo, model, stds) = experiment_world(config)?;
    let m = topo.agent_count();

    let mut runs: Vec<PreparedRun> = Vec::new();
    let mut skipped: Vec<SkippedRun> = Vec::new();
    for spec in &config.algorithms {
        let graph = match spec.graph() {
            GraphChoice::Original => topo.clone(),
            GraphChoice::SpanningTree => topo.spanning_tree(),
        };
        let topology_label = config.topology_label(spec);
        let supplied = provided
            .iter()
            .position(|c| c.algorithm == spec.label() && c.topology == topology_label);
        if let Some(ix) = supplied {
            // A schedule the caller supplied explicitly must fit; failure
            // here is an error, not a skipped run.
            let loaded = provided.swap_remove(ix);
            let engine = adopt_schedule(loaded.schedule, spec, &graph, &model, config.horizon)?;
            runs.push(PreparedRun {
                algorithm: spec.label(),
                topology_label,
                engine,
            });
            continue;
        }
        let engine = match spec {
            AlgorithmSpec::Odol { .. } => {
                odol_schedule(&graph, &model, config.horizon).map(Engine::Odol)
            }
            AlgorithmSpec::Oedol { .. } => {
                oedol_schedule(&graph, &model, config.horizon).map(Engine::Oedol)
            }
            AlgorithmSpec::Sdol { window, .. } => {
                sdol_weights(&graph, &model, *window).map(Engine::Sdol)
            }
            AlgorithmSpec::Drls {
                forgetting, ridge, ..
            } => relative_variance_combiner(&graph, &stds).map(|combiner| Engine::Drls {
                graph: graph.clone(),
                combiner,
                forgetting: *forgetting,
                ridge: *ridge,
            }),
        };
        match engine {
            Ok(engine) => runs.push(PreparedRun {
                algorithm: spec.label(),
                topology_label,
                engine,
            }),
            Err(err) => skipped.push(SkippedRun {
                algorithm: spec.label(),
                topology: topology_label,
                reason: err.to_string(),
            }),
        }
    }
    if let Some(stray) = provided.first() {
        return Err(Error::InvalidConfig(format!(
            "weights for {}@{} match no configured algorithm",
            stray.algorithm, stray.topology
        )));
    }

    struct TrialCost {
        round_costs: Vec<f64>,
        agent_costs: Vec<Vec<f64>>,
    }

    let horizon = config.horizon;
    let trial_results: Vec<Vec<TrialCost>> = (0..config.trials)
        .into_par_iter()
        .map(|k| -> Result<Vec<TrialCost>> {
            let seed = derive_seed(config.master_seed, &[stream::TRIAL, k as u64]);
            let trace = sample_trace(&model, horizon, seed)?;
            let state = trace.state();
            runs.iter()
                .map(|run| {
                    let trajectory = run.engine.run(&model, &trace)?;
                    let sq = trajectory.squared_errors(state);
                    let round_costs = (1..=horizon)
                        .map(|t| (0..m).map(|a| sq[a][t]).sum())
                        .collect();
                    let agent_costs = sq.iter().map(|row| row[1..].to_vec()).collect();
                    Ok(TrialCost {
                        round_costs,
                        agent_costs,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let reports = runs
        .iter()
        .enumerate()
        .map(|(r, run)| {
            let round_costs: Vec<Vec<f64>> = trial_results
                .iter()
                .map(|trial| trial[r].round_costs.clone())
                .collect();
            let mut cumulative = Vec::with_capacity(horizon);
            let mut running: Vec<f64> = vec![0.0; config.trials];
            for t in 0..horizon {
                for (sum, row) in running.iter_mut().zip(&round_costs) {
                    *sum += row[t];
                }
                cumulative.push(stat_of(&running));
            }
            let terminal = (0..horizon)
                .map(|t| {
                    let samples: Vec<f64> = round_costs.iter().map(|row| row[t]).collect();
                    stat_of(&samples)
                })
                .collect();
            let agent_mse = (0..m)
                .map(|a| {
                    (0..horizon)
                        .map(|t| {
                            let samples: Vec<f64> = trial_results
                                .iter()
                                .map(|trial| trial[r].agent_costs[a][t])
                                .collect();
                            stat_of(&samples)
                        })
                        .collect()
                })
                .collect();
            AlgorithmReport {
                algorithm: run.algorithm.clone(),
                topology: run.topology_label.clone(),
                round_costs,
                cumulative,
                terminal,
                agent_mse,
            }
        })
        .collect();

    Ok(CostReport {
        horizon,
        trials: config.trials,
        master_seed: config.master_seed,
        agent_count: m,
        runs: reports,
        skipped,
    })
}

/// Which cost curve a comparison entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMetric {
    /// Cumulative team cost through round `t`.
    Cumulative,
    /// Team cost of round `t` alone.
    Terminal,
}

/// One pairwise comparison at one round: the mean of the per-trial paired
/// difference `first − second` with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonEntry {
    pub metric: CostMetric,
    pub time: usize,
    pub first: String,
    pub second: String,
    pub difference: f64,
    pub stderr: f64,
    /// Whether the difference clears three standard errors (a deterministic
    /// nonzero difference counts).
    pub significant: bool,
}

/// All pairwise orderings between the runs of one or more reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    horizon: usize,
    trials: usize,
    entries: Vec<ComparisonEntry>,
}

impl ComparisonSummary {
    pub fn entries(&self) -> &[ComparisonEntry] {
        &self.entries
    }

    /// Looks up the entry for a pair in either orientation; the returned
    /// difference is always `first − second` as stored.
    pub fn entry(
        &self,
        metric: CostMetric,
        time: usize,
        first: &str,
        second: &str,
    ) -> Option<&ComparisonEntry> {
        self.entries.iter().find(|e| {
            e.metric == metric
                && e.time == time
                && ((e.first == first && e.second == second)
                    || (e.first == second && e.second == first))
        })
    }

    /// Mean paired difference `first − second`, reoriented if the pair is
    /// stored the other way round.
    pub fn difference(
        &self,
        metric: CostMetric,
        time: usize,
        first: &str,
        second: &str,
    ) -> Option<f64> {
        self.entry(metric, time, first, second).map(|e| {
            if e.first == first {
                e.difference
            } else {
                -e.difference
            }
        })
    }

    /// True when `first` beats `second` (strictly lower cost) by more than
    /// three standard errors of the paired difference.
    pub fn significantly_below(
        &self,
        metric: CostMetric,
        time: usize,
        first: &str,
        second: &str,
    ) -> bool {
        match self.entry(metric, time, first, second) {
            Some(e) => {
                let diff = if e.first == first {
                    e.difference
                } else {
                    -e.difference
                };
                diff < 0.0 && e.significant
            }
            None => false,
        }
    }
}

/// Builds every pairwise J/P ordering across the runs of the given reports.
///
/// All reports must share the horizon, trial count, and master seed — the
/// per-trial costs are then paired (every algorithm saw the same traces),
/// which is what makes the difference's standard error meaningful.
pub fn compare_report(reports: &[&CostReport]) -> Result<ComparisonSummary> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidComparison("no reports to compare".into()))?;
    for other in &reports[1..] {
        if other.horizon != first.horizon
            || other.trials != first.trials
            || other.master_seed != first.master_seed
        {
            return Err(Error::InvalidComparison(format!(
                "reports disagree on (horizon, trials, master seed): \
                 ({}, {}, {}) vs ({}, {}, {})",
                first.horizon,
                first.trials,
                first.master_seed,
                other.horizon,
                other.trials,
                other.master_seed
            )));
        }
    }

    let mut pooled: Vec<(usize, &AlgorithmReport)> = Vec::new();
    for (ix, report) in reports.iter().enumerate() {
        for run in &report.runs {
            pooled.push((ix, run));
        }
    }
    let labels: Vec<String> = pooled
        .iter()
        .map(|(ix, run)| {
            let base = format!("{}@{}", run.algorithm, run.topology);
            let clashes = pooled
                .iter()
                .filter(|(_, other)| other.algorithm == run.algorithm && other.topology == run.topology)
                .count();
            if clashes > 1 {
                format!("{base}[{ix}]")
            } else {
                base
            }
        })
        .collect();

    let horizon = first.horizon;
    let mut entries = Vec::new();
    for a in 0..pooled.len() {
        for b in (a + 1)..pooled.len() {
            for metric in [CostMetric::Cumulative, CostMetric::Terminal] {
                for t in 1..=horizon {
                    let (left, right) = match metric {
                        CostMetric::Cumulative => (
                            pooled[a].1.trial_cumulative(t),
                            pooled[b].1.trial_cumulative(t),
                        ),
                        CostMetric::Terminal => (
                            pooled[a].1.trial_terminal(t),
                            pooled[b].1.trial_terminal(t),
                        ),
                    };
                    let diffs: Vec<f64> = left
                        .iter()
                        .zip(&right)
                        .map(|(x, y)| x - y)
                        .collect();
                    let stat = stat_of(&diffs);
                    let significant = if stat.stderr > 0.0 {
                        stat.mean.abs() > 3.0 * stat.stderr
                    } else {
                        stat.mean != 0.0
                    };
                    entries.push(ComparisonEntry {
                        metric,
                        time: t,
                        first: labels[a].clone(),
                        second: labels[b].clone(),
                        difference: stat.mean,
                        stderr: stat.stderr,
                        significant,
                    });
                }
            }
        }
    }

    Ok(ComparisonSummary {
        horizon,
        trials: first.trials,
        entries,
    })
}
