//! Built-in experiment configurations.
//!
//! Each preset is a ready-to-run study over 20-agent networks with a
//! 10-dimensional state, scalar measurements per agent, noise levels drawn
//! from a folded normal distribution, and 100 Monte Carlo trials:
//!
//! - `fig6` — team cost of the relay schedule versus horizon (T = 1..20)
//!   across fully connected, star, random, and line networks;
//! - `fig7` — the same four networks compared on terminal cost out to
//!   T = 200, where the curves close up on each other;
//! - `fig10` — relay schedule and diffusion baseline on a random network,
//!   plus estimate exchange on its spanning tree, to T = 50;
//! - `fig11` — the same three-way comparison on terminal cost to T = 500;
//! - `fig12` — sliding-window estimators with depths 50 and 100 against the
//!   relay schedule on a random network, to T = 120, far enough to cross
//!   both window depths.

use teamnet_core::harness::{
    AlgorithmSpec, ExperimentConfig, GraphChoice, ModelSpec, TopologySpec,
};
use teamnet_core::topology::TopologyKind;

/// Names accepted by `--preset`.
pub const NAMES: &[&str] = &["fig6", "fig7", "fig10", "fig11", "fig12"];

const AGENTS: usize = 20;
const TRIALS: usize = 100;
const MASTER_SEED: u64 = 20;
/// Wiring seed of the random network the comparison presets share.
const ARBITRARY_NET_SEED: u64 = 1;
/// Wiring seed of the (different) random network the windowed preset uses.
const WINDOWED_NET_SEED: u64 = 2;

fn model() -> ModelSpec {
    ModelSpec {
        state_dim: 10,
        measurement_dim: 1,
        noise_scale: 1.0,
    }
}

fn topology(kind: TopologyKind, seed: Option<u64>) -> TopologySpec {
    TopologySpec {
        kind,
        agents: AGENTS,
        seed,
    }
}

fn four_networks(stem: &str, horizon: usize) -> Vec<(String, ExperimentConfig)> {
    let kinds = [
        (TopologyKind::FullyConnected, None),
        (TopologyKind::Star, None),
        (TopologyKind::Random, Some(ARBITRARY_NET_SEED)),
        (TopologyKind::Line, None),
    ];
    kinds
        .into_iter()
        .map(|(kind, seed)| {
            let config = ExperimentConfig {
                horizon,
                trials: TRIALS,
                master_seed: MASTER_SEED,
                topology: topology(kind, seed),
                model: model(),
                algorithms: vec![AlgorithmSpec::Odol {
                    graph: GraphChoice::Original,
                }],
            };
            (format!("{stem}_{kind}"), config)
        })
        .collect()
}

fn baseline_comparison(stem: &str, horizon: usize) -> Vec<(String, ExperimentConfig)> {
    let config = ExperimentConfig {
        horizon,
        trials: TRIALS,
        master_seed: MASTER_SEED,
        topology: topology(TopologyKind::Random, Some(ARBITRARY_NET_SEED)),
        model: model(),
        algorithms: vec![
            AlgorithmSpec::Odol {
                graph: GraphChoice::Original,
            },
            AlgorithmSpec::Oedol {
                graph: GraphChoice::SpanningTree,
            },
            AlgorithmSpec::Drls {
                forgetting: teamnet_core::baseline::DEFAULT_FORGETTING,
                ridge: teamnet_core::baseline::DEFAULT_RIDGE,
                graph: GraphChoice::Original,
            },
        ],
    };
    vec![(stem.to_string(), config)]
}

fn windowed(stem: &str, horizon: usize) -> Vec<(String, ExperimentConfig)> {
    let config = ExperimentConfig {
        horizon,
        trials: TRIALS,
        master_seed: MASTER_SEED,
        topology: topology(TopologyKind::Random, Some(WINDOWED_NET_SEED)),
        model: model(),
        algorithms: vec![
            AlgorithmSpec::Odol {
                graph: GraphChoice::Original,
            },
            AlgorithmSpec::Sdol {
                window: 50,
                graph: GraphChoice::Original,
            },
            AlgorithmSpec::Sdol {
                window: 100,
                graph: GraphChoice::Original,
            },
        ],
    };
    vec![(stem.to_string(), config)]
}

/// The configurations behind a preset name, each with the file stem its
/// reports are written under. `None` for an unknown name.
pub fn configs(name: &str) -> Option<Vec<(String, ExperimentConfig)>> {
    match name {
        "fig6" => Some(four_networks("fig6", 20)),
        "fig7" => Some(four_networks("fig7", 200)),
        "fig10" => Some(baseline_comparison("fig10", 50)),
        "fig11" => Some(baseline_comparison("fig11", 500)),
        "fig12" => Some(windowed("fig12", 120)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in NAMES {
            let jobs = configs(name).unwrap();
            assert!(!jobs.is_empty(), "{name} is empty");
            for (stem, config) in jobs {
                config
                    .validate()
                    .unwrap_or_else(|e| panic!("{stem}: {e}"));
                assert_eq!(config.topology.agents, 20);
                assert_eq!(config.model.state_dim, 10);
                assert_eq!(config.model.measurement_dim, 1);
                assert_eq!(config.trials, 100);
            }
        }
        assert!(configs("fig9000").is_none());
    }

    #[test]
    fn comparison_presets_share_the_seed_so_reports_pair() {
        for name in ["fig6", "fig7"] {
            let jobs = configs(name).unwrap();
            assert_eq!(jobs.len(), 4);
            let seed = jobs[0].1.master_seed;
            assert!(jobs.iter().all(|(_, c)| c.master_seed == seed));
            let horizon = jobs[0].1.horizon;
            assert!(jobs.iter().all(|(_, c)| c.horizon == horizon));
        }
    }

    #[test]
    fn windowed_preset_crosses_both_depths() {
        let jobs = configs("fig12").unwrap();
        let config = &jobs[0].1;
        let windows: Vec<usize> = config
            .algorithms
            .iter()
            .filter_map(|a| match a {
                AlgorithmSpec::Sdol { window, .. } => Some(*window),
                _ => None,
            })
            .collect();
        assert_eq!(windows, vec![50, 100]);
        assert!(config.horizon > 100);
    }
}
