//! Saving and loading precomputed weight schedules.
//!
//! Every scheduled estimator in this crate is data-independent: its weights
//! follow from the graph and the measurement model alone. They can therefore
//! be synthesised once, written to a file, and handed to any number of later
//! simulations. Files are self-describing JSON tagged with the algorithm
//! name, and loading re-validates the content — graph invariants, matrix
//! shapes, index ranges, and the arrival patterns implied by the graph — so
//! a corrupted or hand-edited file fails at load time with a description
//! instead of panicking mid-simulation.
//!
//! Serialization is lossless for `f64`, so a loaded schedule reproduces the
//! in-memory synthesis bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::oedol::OedolSchedule;
use crate::oracle::OdolSchedule;
use crate::sdol::SdolWeights;
use crate::{Error, Result};

/// A serializable weight schedule for any of the scheduled estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum WeightSchedule {
    Odol(OdolSchedule),
    Oedol(OedolSchedule),
    Sdol(SdolWeights),
}

impl WeightSchedule {
    pub fn algorithm(&self) -> &'static str {
        match self {
            WeightSchedule::Odol(_) => "odol",
            WeightSchedule::Oedol(_) => "oedol",
            WeightSchedule::Sdol(_) => "sdol",
        }
    }

    /// Structural consistency of the carried weights; every load runs this.
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSchedule::Odol(schedule) => validate_odol(schedule),
            WeightSchedule::Oedol(schedule) => validate_oedol(schedule),
            WeightSchedule::Sdol(weights) => validate_sdol(weights),
        }
    }
}

/// Validates and writes a schedule as one JSON document plus newline.
pub fn write_schedule(out: &mut dyn Write, schedule: &WeightSchedule) -> Result<()> {
    schedule.validate()?;
    serde_json::to_writer(&mut *out, schedule)?;
    writeln!(out)?;
    Ok(())
}

/// Reads a schedule written by [`write_schedule`], re-validating everything.
pub fn read_schedule(input: &mut dyn Read) -> Result<WeightSchedule> {
    let schedule: WeightSchedule = serde_json::from_reader(input)
        .map_err(|e| Error::MalformedFile(format!("weight schedule: {e}")))?;
    schedule.validate()?;
    Ok(schedule)
}

fn expect(cond: bool, context: &str, detail: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::MalformedFile(format!(
            "weight schedule ({context}): {}",
            detail()
        )))
    }
}

fn expect_shape(
    matrix: &nalgebra::DMatrix<f64>,
    rows: usize,
    cols: usize,
    context: &str,
    name: &str,
) -> Result<()> {
    expect(
        matrix.nrows() == rows && matrix.ncols() == cols,
        context,
        || {
            format!(
                "{name} is {}x{}, expected {rows}x{cols}",
                matrix.nrows(),
                matrix.ncols()
            )
        },
    )
}

fn validate_odol(schedule: &OdolSchedule) -> Result<()> {
    let ctx = "odol";
    let p = schedule.state_dim();
    let q = schedule.measurement_dim();
    let m = schedule.agent_count();
    let horizon = schedule.horizon();
    expect(p >= 1 && q >= 1, ctx, || "zero dimensions".into())?;
    expect(m >= 1, ctx, || "no agents".into())?;
    expect(horizon >= 1, ctx, || "zero horizon".into())?;
    expect(schedule.prior_mean().len() == p, ctx, || {
        format!(
            "prior mean has {} entries, expected {p}",
            schedule.prior_mean().len()
        )
    })?;
    for (ix, row) in schedule.steps_raw().iter().enumerate() {
        let i = ix + 1;
        expect(row.len() == horizon, ctx, || {
            format!("agent {i} covers {} rounds, expected {horizon}", row.len())
        })?;
        for (tx, step) in row.iter().enumerate() {
            let t = tx + 1;
            let d = step.delta().len();
            for id in step.delta() {
                expect(
                    (1..=m).contains(&id.agent) && (1..=t).contains(&id.time),
                    ctx,
                    || {
                        format!(
                            "agent {i} round {t}: arrival ({}, {}) out of range",
                            id.agent, id.time
                        )
                    },
                )?;
            }
            let where_ = format!("agent {i} round {t}");
            expect_shape(step.gain(), p, q * d, ctx, &format!("{where_} gain"))?;
            expect_shape(step.stacked_map(), q * d, p, ctx, &format!("{where_} map"))?;
            expect_shape(step.propagate(), p, p, ctx, &format!("{where_} propagation"))?;
            expect_shape(step.error_cov(), p, p, ctx, &format!("{where_} covariance"))?;
        }
    }
    Ok(())
}

fn validate_oedol(schedule: &OedolSchedule) -> Result<()> {
    let ctx = "oedol";
    let p = schedule.state_dim();
    let q = schedule.measurement_dim();
    let m = schedule.agent_count();
    let horizon = schedule.horizon();
    let topo = schedule.topology();
    expect(p >= 1 && q >= 1, ctx, || "zero dimensions".into())?;
    expect(horizon >= 1, ctx, || "zero horizon".into())?;
    expect(topo.agent_count() == m, ctx, || {
        format!(
            "graph covers {} agents, steps cover {m}",
            topo.agent_count()
        )
    })?;
    expect(topo.is_tree(), ctx, || {
        "the exchange protocol requires a tree".into()
    })?;
    expect(schedule.prior_mean().len() == p, ctx, || {
        format!(
            "prior mean has {} entries, expected {p}",
            schedule.prior_mean().len()
        )
    })?;
    for (ix, row) in schedule.steps_raw().iter().enumerate() {
        let i = ix + 1;
        let width = topo.degree(i);
        expect(row.len() == horizon, ctx, || {
            format!("agent {i} covers {} rounds, expected {horizon}", row.len())
        })?;
        for (tx, step) in row.iter().enumerate() {
            let t = tx + 1;
            let where_ = format!("agent {i} round {t}");
            expect_shape(step.propagate(), p, p, ctx, &format!("{where_} propagation"))?;
            expect_shape(step.own_gain(), p, q, ctx, &format!("{where_} own gain"))?;
            expect_shape(
                step.exchange_gain(),
                p,
                p * width,
                ctx,
                &format!("{where_} exchange gain"),
            )?;
            expect_shape(
                step.message_echo(),
                p * width,
                p,
                ctx,
                &format!("{where_} message echo"),
            )?;
            expect_shape(
                step.innovation_echo(),
                p * width,
                p * width,
                ctx,
                &format!("{where_} innovation echo"),
            )?;
            expect_shape(
                step.incoming_map(),
                p * width,
                p,
                ctx,
                &format!("{where_} incoming map"),
            )?;
            expect(step.incoming_noise().len() == width, ctx, || {
                format!(
                    "{where_}: {} incoming noise blocks, expected {width}",
                    step.incoming_noise().len()
                )
            })?;
            for block in step.incoming_noise() {
                expect_shape(block, p, p, ctx, &format!("{where_} incoming noise block"))?;
            }
            expect_shape(step.error_cov(), p, p, ctx, &format!("{where_} covariance"))?;
        }
    }
    Ok(())
}

fn validate_sdol(weights: &SdolWeights) -> Result<()> {
    let ctx = "sdol";
    let p = weights.state_dim();
    let q = weights.measurement_dim();
    let m = weights.agent_count();
    let window = weights.window();
    let topo = weights.topology();
    expect(p >= 1 && q >= 1, ctx, || "zero dimensions".into())?;
    expect(topo.agent_count() == m, ctx, || {
        format!(
            "graph covers {} agents, weights cover {m}",
            topo.agent_count()
        )
    })?;
    let hops = topo.hop_structure();
    expect(window >= 1 && window >= hops.max_eccentricity(), ctx, || {
        format!(
            "window {window} is shallower than the network spread {}",
            hops.max_eccentricity()
        )
    })?;
    expect_shape(weights.snapshot_gain(), p, q * m, ctx, "snapshot gain")?;
    expect_shape(weights.snapshot_cov(), p, p, ctx, "snapshot covariance")?;
    for (ix, agent) in weights.agents_raw().iter().enumerate() {
        let i = ix + 1;
        let kappa = hops.eccentricity(i);
        let where_ = format!("agent {i}");
        expect(agent.eccentricity() == kappa, ctx, || {
            format!(
                "{where_}: eccentricity {} does not match the graph's {kappa}",
                agent.eccentricity()
            )
        })?;
        // The windowed history pattern and the arrival order are functions
        // of the graph; recompute both and demand an exact match.
        let mut pattern = Vec::new();
        for age in 1..window {
            for k in 0..=kappa.min(age - 1) {
                for &j in hops.layer(i, k) {
                    pattern.push((j, age));
                }
            }
        }
        expect(agent.window_pattern() == pattern.as_slice(), ctx, || {
            format!("{where_}: window pattern does not match the graph")
        })?;
        let mut arrivals = Vec::new();
        for k in 1..=kappa {
            for &j in hops.layer(i, k) {
                arrivals.push((j, k));
            }
        }
        expect(agent.arrivals() == arrivals.as_slice(), ctx, || {
            format!("{where_}: arrival order does not match the graph")
        })?;
        let n = pattern.len();
        expect_shape(agent.propagate(), p, p, ctx, &format!("{where_} propagation"))?;
        expect_shape(agent.own_gain(), p, q, ctx, &format!("{where_} own gain"))?;
        expect_shape(
            agent.relay_gain(),
            p,
            q * (m - 1),
            ctx,
            &format!("{where_} relay gain"),
        )?;
        expect_shape(
            agent.forget_gain(),
            p,
            q * m,
            ctx,
            &format!("{where_} forget gain"),
        )?;
        expect_shape(
            agent.window_gain(),
            p,
            q * n,
            ctx,
            &format!("{where_} window gain"),
        )?;
        expect_shape(agent.window_map(), q * n, p, ctx, &format!("{where_} window map"))?;
        expect(agent.window_noise().len() == n, ctx, || {
            format!(
                "{where_}: {} window noise blocks, expected {n}",
                agent.window_noise().len()
            )
        })?;
        expect_shape(agent.fresh_map(), q * m, p, ctx, &format!("{where_} fresh map"))?;
        expect(agent.fresh_noise().len() == m, ctx, || {
            format!(
                "{where_}: {} fresh noise blocks, expected {m}",
                agent.fresh_noise().len()
            )
        })?;
        for block in agent.window_noise().iter().chain(agent.fresh_noise()) {
            expect_shape(block, q, q, ctx, &format!("{where_} noise block"))?;
        }
        for (name, matrix) in [
            ("window blend", agent.window_blend()),
            ("snapshot blend", agent.snapshot_blend()),
            ("window covariance", agent.window_cov()),
            ("steady covariance", agent.steady_cov()),
        ] {
            expect_shape(matrix, p, p, ctx, &format!("{where_} {name}"))?;
        }
    }
    Ok(())
}
