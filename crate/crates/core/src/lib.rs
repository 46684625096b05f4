//! Distributed minimum-mean-square-error (MMSE) estimation over sensor
//! networks.
//!
//! A static Gaussian state is observed by a network of agents, each taking a
//! noisy linear measurement per round and talking only to its graph
//! neighbours. This crate provides:
//!
//! - [`topology`]: network construction, hop structure, spanning trees, and
//!   clique-cell decompositions;
//! - [`model`]: the linear-Gaussian world model and reproducible measurement
//!   traces;
//! - [`oracle`]: exact batch conditioning and the delay-limited oracle
//!   estimator that conditions on everything a node could possibly know;
//! - [`disclosure`]: affine coefficient maps of estimators and a span analyzer
//!   that decides whether neighbour estimates carry enough information to
//!   reproduce the oracle;
//! - [`oedol`]: an exchange protocol for tree networks that attains the oracle
//!   with one length-p message per neighbour per round;
//! - [`sdol`]: a sliding-window estimator with time-invariant weights and
//!   finite memory;
//! - [`baseline`]: a diffusion recursive-least-squares baseline;
//! - [`harness`]: multi-trial experiment runner, cost reports, and paired
//!   comparisons;
//! - [`schedule_io`]: a portable file format for precomputed weight schedules.

pub mod baseline;
pub mod disclosure;
mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oedol;
pub mod oracle;
pub mod rng;
pub mod schedule_io;
pub mod sdol;
pub mod topology;

pub use error::{Error, Result};
