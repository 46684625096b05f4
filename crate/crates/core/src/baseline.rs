//! Diffusion recursive-least-squares baseline.
//!
//! Each round every agent adapts its local estimate against its own fresh
//! measurement with a regularized RLS recursion, nudges the result towards
//! its neighbours' intermediate estimates (an incremental step weighted by
//! the reciprocal of the largest degree), and finally mixes the
//! neighbourhood's intermediates with inverse-noise-variance weights.
//! Unlike the scheduled estimators in this crate, the baseline carries no
//! model of what its neighbours already know, so relayed information is
//! double-counted and the team cost stays above the optimal schedules.

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::model::{MeasurementTrace, WorldModel};
use crate::oracle::EstimateTrajectory;
use crate::topology::NetworkTopology;
use crate::{Error, Result};

/// Default forgetting factor: weigh the whole history uniformly.
pub const DEFAULT_FORGETTING: f64 = 1.0;
/// Default ridge regularization seeding the inverse-correlation recursion.
pub const DEFAULT_RIDGE: f64 = 1e-3;

/// Row-stochastic mixing weights, one row per agent, supported on the
/// agent's closed neighbourhood.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerMatrix {
    weights: DMatrix<f64>,
}

impl CombinerMatrix {
    /// Validates and wraps an explicit weight matrix: entries must be
    /// nonnegative, vanish outside each agent's closed neighbourhood, and
    /// every row must sum to one.
    pub fn new(topo: &NetworkTopology, weights: DMatrix<f64>) -> Result<Self> {
        let m = topo.agent_count();
        if weights.nrows() != m || weights.ncols() != m {
            return Err(Error::InvalidSize(format!(
                "combiner is {}x{}, network has {m} agents",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 1..=m {
            let mut sum = 0.0;
            for j in 1..=m {
                let w = weights[(i - 1, j - 1)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "combiner weight ({i}, {j}) is {w}, expected nonnegative"
                    )));
                }
                let local = j == i || topo.neighbour_position(i, j).is_some();
                if !local && w != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "combiner weight ({i}, {j}) is nonzero but {j} is not a neighbour of {i}"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "combiner row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(CombinerMatrix { weights })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weight that agent `i` puts on agent `j`'s intermediate estimate.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i - 1, j - 1)]
    }
}

/// Builds the relative-variance rule: each agent weighs its closed
/// neighbourhood by inverse noise variance, normalized to sum to one.
pub fn relative_variance_combiner(
    topo: &NetworkTopology,
    noise_stds: &[f64],
) -> Result<CombinerMatrix> {
    let m = topo.agent_count();
    if noise_stds.len() != m {
        return Err(Error::InvalidSize(format!(
            "{} noise levels for {m} agents",
            noise_stds.len()
        )));
    }
    if let Some(bad) = noise_stds.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise levels must be strictly positive, got {bad}"
        )));
    }
    let mut weights = DMatrix::zeros(m, m);
    for i in 1..=m {
        let hood: Vec<usize> = std::iter::once(i)
            .chain(topo.neighbours(i).iter().copied())
            .collect();
        let total: f64 = hood.iter().map(|&k| noise_stds[k - 1].powi(-2)).sum();
        for &j in &hood {
            weights[(i - 1, j - 1)] = noise_stds[j - 1].powi(-2) / total;
        }
    }
    CombinerMatrix::new(topo, weights)
}

/// Runs the adapt–blend–combine recursion over a measurement trace and
/// returns the per-agent estimate trajectory, tagged `"drls"`.
///
/// `forgetting` discounts past measurements geometrically (1 keeps the
/// whole history); `ridge` seeds the inverse-correlation recursion at
/// `ridge⁻¹·I`, fading as real measurements accumulate.
pub fn drls_run(
    topo: &NetworkTopology,
    model: &WorldModel,
    combiner: &CombinerMatrix,
    trace: &MeasurementTrace,
    forgetting: f64,
    ridge: f64,
) -> Result<EstimateTrajectory> {
    let m = topo.agent_count();
    if model.agent_count() != m || trace.agent_count() != m {
        return Err(Error::InvalidInput(format!(
            "network has {m} agents, model {}, trace {}",
            model.agent_count(),
            trace.agent_count()
        )));
    }
    if combiner.weights().nrows() != m {
        return Err(Error::InvalidInput(format!(
            "combiner covers {} agents, network has {m}",
            combiner.weights().nrows()
        )));
    }
    if !(forgetting > 0.0 && forgetting <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "forgetting factor {forgetting} is outside (0, 1]"
        )));
    }
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidInput(format!(
            "ridge regularization {ridge} must be positive and finite"
        )));
    }

    let p = model.state_dim();
    let q = model.measurement_dim();
    let max_degree = (1..=m).map(|i| topo.degree(i)).max().unwrap_or(0);
    let step = if max_degree > 0 {
        1.0 / max_degree as f64
    } else {
        0.0
    };

    let mut estimates: Vec<Vec<DVector<f64>>> =
        vec![vec![model.prior_mean().clone()]; m];
    let mut current: Vec<DVector<f64>> = vec![model.prior_mean().clone(); m];
    let mut inv_corr: Vec<DMatrix<f64>> =
        vec![DMatrix::identity(p, p) / ridge; m];

    for t in 1..=trace.horizon() {
        // Adapt: regularized RLS against the own fresh measurement.
        let mut adapted: Vec<DVector<f64>> = Vec::with_capacity(m);
        for i in 1..=m {
            let map = model.observation(i);
            let cross = &inv_corr[i - 1] * map.transpose();
            let denom = map * &cross + DMatrix::identity(q, q) * forgetting;
            let gain = linalg::right_divide_sym(&cross, &denom);
            let residual = trace.measurement(i, t) - map * &current[i - 1];
            adapted.push(&current[i - 1] + &gain * residual);
            let shrunk = (&inv_corr[i - 1] - &gain * cross.transpose()) / forgetting;
            inv_corr[i - 1] = linalg::symmetrize(&shrunk);
        }
        // Blend: incremental step towards the neighbours' intermediates.
        let mut blended: Vec<DVector<f64>> = Vec::with_capacity(m);
        for i in 1..=m {
            let mut v = adapted[i - 1].clone();
            for &j in topo.neighbours(i) {
                v += step * (&adapted[j - 1] - &adapted[i - 1]);
            }
            blended.push(v);
        }
        // Combine: relative-variance mix over the closed neighbourhood.
        for i in 1..=m {
            let mut mixed = DVector::zeros(p);
            for j in 1..=m {
                let w = combiner.weight(i, j);
                if w != 0.0 {
                    mixed += w * &blended[j - 1];
                }
            }
            estimates[i - 1].push(mixed.clone());
            current[i - 1] = mixed;
        }
    }

    EstimateTrajectory::new("drls", estimates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{folded_normal_stds, random_world, sample_trace};
    use crate::oracle::{odol_run, odol_schedule};
    use crate::rng::derive_seed;
    use crate::topology::{make_topology, TopologyKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn mixed_noise_weights_follow_the_inverse_variances() {
        // Self and one neighbour at noise 1, the other neighbour at noise 2:
        // weights split 4/9, 4/9, 1/9.
        let topo = make_topology(TopologyKind::Line, 3, None).unwrap();
        let combiner = relative_variance_combiner(&topo, &[1.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(combiner.weight(2, 2), 4.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(combiner.weight(2, 1), 4.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(combiner.weight(2, 3), 1.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn equal_noise_gives_uniform_neighbourhood_weights() {
        let topo = make_topology(TopologyKind::Star, 4, None).unwrap();
        let combiner = relative_variance_combiner(&topo, &[3.0; 4]).unwrap();
        // Hub sees everyone.
        for j in 1..=4 {
            assert_abs_diff_eq!(combiner.weight(1, j), 0.25, epsilon = 1e-12);
        }
        // A leaf sees itself and the hub only.
        assert_abs_diff_eq!(combiner.weight(3, 3), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(combiner.weight(3, 1), 0.5, epsilon = 1e-12);
        assert_eq!(combiner.weight(3, 2), 0.0);
        assert_eq!(combiner.weight(3, 4), 0.0);
    }

    #[test]
    fn degenerate_noise_levels_are_rejected() {
        let topo = make_topology(TopologyKind::Line, 2, None).unwrap();
        assert!(relative_variance_combiner(&topo, &[1.0, 0.0]).is_err());
        assert!(relative_variance_combiner(&topo, &[1.0, -2.0]).is_err());
        assert!(relative_variance_combiner(&topo, &[1.0]).is_err());
    }

    #[test]
    fn explicit_weights_are_validated() {
        let topo = make_topology(TopologyKind::Line, 3, None).unwrap();
        // Weight on a non-neighbour (1 and 3 are two hops apart).
        let mut far = DMatrix::zeros(3, 3);
        far[(0, 0)] = 0.5;
        far[(0, 2)] = 0.5;
        far[(1, 1)] = 1.0;
        far[(2, 2)] = 1.0;
        assert!(CombinerMatrix::new(&topo, far).is_err());
        // Row that does not sum to one.
        let mut short = DMatrix::<f64>::identity(3, 3);
        short[(0, 0)] = 0.9;
        assert!(CombinerMatrix::new(&topo, short).is_err());
        // Negative entry hiding in a stochastic row.
        let mut negative = DMatrix::<f64>::identity(3, 3);
        negative[(0, 0)] = 1.5;
        negative[(0, 1)] = -0.5;
        assert!(CombinerMatrix::new(&topo, negative).is_err());
    }

    proptest! {
        #[test]
        fn combiner_rows_are_stochastic_and_local(
            kind_ix in 0usize..4,
            m in 3usize..9,
            seed in 0u64..1000,
        ) {
            let kind = [
                TopologyKind::FullyConnected,
                TopologyKind::Star,
                TopologyKind::Line,
                TopologyKind::Cycle,
            ][kind_ix];
            let topo = make_topology(kind, m, None).unwrap();
            let stds = folded_normal_stds(m, 1.0, seed).unwrap();
            let combiner = relative_variance_combiner(&topo, &stds).unwrap();
            for i in 1..=m {
                let mut sum = 0.0;
                for j in 1..=m {
                    let w = combiner.weight(i, j);
                    prop_assert!(w >= 0.0);
                    if w != 0.0 {
                        prop_assert!(i == j || topo.neighbour_position(i, j).is_some());
                    }
                    sum += w;
                }
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_agent_recursion_converges_to_least_squares() {
        // With one agent, unit forgetting, and a vanishing ridge, the
        // recursion is plain RLS and must land on the running mean.
        let topo = NetworkTopology::new(1, &[]).unwrap();
        let model = WorldModel::scalar_network(1, 1.0, 1.0).unwrap();
        let combiner = relative_variance_combiner(&topo, &[1.0]).unwrap();
        let horizon = 60;
        let trace = sample_trace(&model, horizon, 31).unwrap();
        let trajectory = drls_run(&topo, &model, &combiner, &trace, 1.0, 1e-9).unwrap();
        let mean: f64 = (1..=horizon)
            .map(|t| trace.measurement(1, t)[0])
            .sum::<f64>()
            / horizon as f64;
        assert_abs_diff_eq!(trajectory.estimate(1, horizon)[0], mean, epsilon = 1e-9);
    }

    #[test]
    fn identical_agents_with_uniform_mixing_stay_in_agreement() {
        // On a complete graph with equal noise the combine step averages
        // every intermediate, so all agents hold the same estimate after
        // every round even though their measurements differ.
        let topo = make_topology(TopologyKind::FullyConnected, 3, None).unwrap();
        let stds = [1.0; 3];
        let model = random_world(2, 1, &stds, 33).unwrap();
        let combiner = relative_variance_combiner(&topo, &stds).unwrap();
        let trace = sample_trace(&model, 8, 34).unwrap();
        let trajectory = drls_run(&topo, &model, &combiner, &trace, 1.0, 1e-3).unwrap();
        for t in 1..=8 {
            let first = trajectory.estimate(1, t);
            for i in 2..=3 {
                assert_eq!(trajectory.estimate(i, t), first, "round {t}, agent {i}");
            }
        }
    }

    #[test]
    fn recursion_parameters_are_validated() {
        let topo = make_topology(TopologyKind::Line, 2, None).unwrap();
        let model = WorldModel::scalar_network(2, 1.0, 1.0).unwrap();
        let combiner = relative_variance_combiner(&topo, &[1.0, 1.0]).unwrap();
        let trace = sample_trace(&model, 3, 35).unwrap();
        for (forgetting, ridge) in [(0.0, 1e-3), (1.5, 1e-3), (f64::NAN, 1e-3), (1.0, 0.0), (1.0, -1.0)] {
            assert!(
                drls_run(&topo, &model, &combiner, &trace, forgetting, ridge).is_err(),
                "accepted forgetting {forgetting}, ridge {ridge}"
            );
        }
    }

    #[test]
    fn forgetting_discounts_the_early_rounds() {
        // With a forgetting factor below one the estimate leans towards
        // recent measurements, so feeding a stream whose later half is
        // shifted, the discounted estimate must sit closer to the late mean
        // than the undiscounted one.
        let topo = NetworkTopology::new(1, &[]).unwrap();
        let model = WorldModel::scalar_network(1, 1.0, 1.0).unwrap();
        let combiner = relative_variance_combiner(&topo, &[1.0]).unwrap();
        let trace = sample_trace(&model, 40, 36).unwrap();
        let late_mean: f64 =
            (21..=40).map(|t| trace.measurement(1, t)[0]).sum::<f64>() / 20.0;
        let flat = drls_run(&topo, &model, &combiner, &trace, 1.0, 1e-6).unwrap();
        let discounted = drls_run(&topo, &model, &combiner, &trace, 0.7, 1e-6).unwrap();
        let flat_gap = (flat.estimate(1, 40)[0] - late_mean).abs();
        let discounted_gap = (discounted.estimate(1, 40)[0] - late_mean).abs();
        assert!(
            discounted_gap < flat_gap,
            "discounted {discounted_gap:.4} vs flat {flat_gap:.4}"
        );
    }

    #[test]
    fn diffusion_trails_the_optimal_schedule() {
        // Averaged over trials, the baseline's team cost must stay above
        // the optimal relay schedule on the same network.
        let topo = make_topology(TopologyKind::Line, 3, None).unwrap();
        let stds = [1.0; 3];
        let model = random_world(2, 1, &stds, 37).unwrap();
        let combiner = relative_variance_combiner(&topo, &stds).unwrap();
        let horizon = 10;
        let schedule = odol_schedule(&topo, &model, horizon).unwrap();
        let trials = 60;
        let mut drls_cost = 0.0;
        let mut odol_cost = 0.0;
        for k in 0..trials {
            let trace =
                sample_trace(&model, horizon, derive_seed(38, &[k])).unwrap();
            let baseline = drls_run(&topo, &model, &combiner, &trace, 1.0, 1e-3).unwrap();
            let optimal = odol_run(&schedule, &trace).unwrap();
            for i in 1..=3 {
                drls_cost += baseline.squared_errors(trace.state())[i - 1][horizon];
                odol_cost += optimal.squared_errors(trace.state())[i - 1][horizon];
            }
        }
        assert!(
            drls_cost > odol_cost,
            "baseline cost {drls_cost:.3} not above the schedule's {odol_cost:.3}"
        );
    }
}
