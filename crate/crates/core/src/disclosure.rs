//! Estimates as explicit affine functionals of raw measurements, and the
//! span analysis that decides whether exchanging local estimates can ever
//! reproduce the all-knowing reference estimator.
//!
//! Every conditional-mean estimate in the linear-Gaussian world is an affine
//! function of the measurements it conditions on. [`coefficient_map`] makes
//! that function explicit. [`span_sufficiency`] then asks a sharp question:
//! at agent `i` and time `t`, do the functionals the agent can actually see —
//! its own raw measurements plus the estimates its neighbours have already
//! shared — linearly span the reference estimator's functional? On trees the
//! answer is always yes; on a four-cycle it provably is not, because two
//! neighbours' estimates blend a far-side measurement with their own fresh
//! ones at incompatible ratios.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{MeasurementTrace, WorldModel};
use crate::oracle::{conditioning_parts, oracle_information_set, InformationSet, MeasurementId};
use crate::topology::NetworkTopology;
use crate::{linalg, Error, Result};

/// Relative residual below which a functional counts as inside the span.
pub const SPAN_REL_TOL: f64 = 1e-8;

/// Witness entries are reported when their aggregated residual weight is at
/// least this fraction of the largest one.
const WITNESS_REL_CUTOFF: f64 = 0.1;

/// Exact affine representation of a conditional-mean estimate:
/// `constant + Σ coeff_{j,τ} · y_{j,τ}` over the owning information set.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMap {
    /// `(agent, time)` whose estimate this map represents.
    owner: (usize, usize),
    constant: DVector<f64>,
    /// Per-measurement coefficient blocks (`p × q`), in information-set order.
    coeffs: Vec<(MeasurementId, DMatrix<f64>)>,
}

impl CoefficientMap {
    pub fn owner(&self) -> (usize, usize) {
        self.owner
    }

    pub fn constant(&self) -> &DVector<f64> {
        &self.constant
    }

    pub fn coefficients(&self) -> &[(MeasurementId, DMatrix<f64>)] {
        &self.coeffs
    }

    /// Coefficient block for one measurement, if it appears in the map.
    pub fn coefficient(&self, id: MeasurementId) -> Option<&DMatrix<f64>> {
        self.coeffs
            .iter()
            .find(|(entry, _)| *entry == id)
            .map(|(_, block)| block)
    }

    /// Applies the affine functional to concrete measurements.
    pub fn evaluate(&self, trace: &MeasurementTrace) -> Result<DVector<f64>> {
        let mut value = self.constant.clone();
        for (id, block) in &self.coeffs {
            if id.time == 0 || id.time > trace.horizon() {
                return Err(Error::InvalidInput(format!(
                    "trace has no measurement (agent {}, t {})",
                    id.agent, id.time
                )));
            }
            value += block * trace.measurement(id.agent, id.time);
        }
        Ok(value)
    }
}

/// Builds the explicit affine form of `E[state | info]`.
pub fn coefficient_map(model: &WorldModel, info: &InformationSet) -> Result<CoefficientMap> {
    let (gain, stacked_map, _) = conditioning_parts(model, info)?;
    let q = model.measurement_dim();
    let constant = model.prior_mean() - &gain * (&stacked_map * model.prior_mean());
    let coeffs = info
        .entries()
        .iter()
        .enumerate()
        .map(|(slot, &id)| (id, gain.columns(slot * q, q).into_owned()))
        .collect();
    Ok(CoefficientMap {
        owner: (info.owner(), info.time()),
        constant,
        coeffs,
    })
}

/// Verdict on whether locally available functionals span the reference
/// estimator at one `(agent, time)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    /// `(agent, time)` the verdict is about.
    pub owner: (usize, usize),
    /// True iff the residual is within [`SPAN_REL_TOL`] of zero, relative to
    /// the reference functional's norm.
    pub achievable: bool,
    /// Least-squares distance from the reference coefficient rows to the
    /// span of the available functional rows (Frobenius).
    pub residual: f64,
    /// Norm of the reference coefficient rows, the yardstick for
    /// `achievable`.
    pub reference_norm: f64,
    /// Measurements carrying the unreachable part, largest contribution
    /// first; empty when achievable.
    pub witness: Vec<MeasurementId>,
}

/// Decides whether agent `i` at time `t` could reproduce the reference
/// estimate from what estimate-exchange makes available: its own raw
/// measurements `y_{i,τ}` for `τ ≤ t` and each neighbour's reference
/// estimates for times `≤ t - 1`.
///
/// All functionals are laid out as coefficient rows over the universe of
/// scalar measurement coordinates up to time `t`; the verdict is a rank-
/// revealing least-squares fit of the reference rows against the available
/// rows.
pub fn span_sufficiency(
    topo: &NetworkTopology,
    model: &WorldModel,
    agent: usize,
    t: usize,
) -> Result<SpanReport> {
    if t == 0 {
        return Err(Error::InvalidInput("span analysis starts at t = 1".into()));
    }
    if agent == 0 || agent > topo.agent_count() {
        return Err(Error::InvalidInput(format!("no agent {agent}")));
    }
    if topo.agent_count() != model.agent_count() {
        return Err(Error::InvalidInput(format!(
            "topology has {} agents, model has {}",
            topo.agent_count(),
            model.agent_count()
        )));
    }
    let m = topo.agent_count();
    let q = model.measurement_dim();
    let p = model.state_dim();
    let hops = topo.hop_structure();
    let universe = m * t * q;
    let coord = |id: MeasurementId, c: usize| ((id.agent - 1) * t + (id.time - 1)) * q + c;

    // Reference functional: coefficient rows of the all-knowing estimate.
    let reference_info = oracle_information_set(&hops, agent, t, None)?;
    let reference = coefficient_map(model, &reference_info)?;
    let mut target = DMatrix::zeros(p, universe);
    for (id, block) in reference.coefficients() {
        for c in 0..q {
            for r in 0..p {
                target[(r, coord(*id, c))] = block[(r, c)];
            }
        }
    }

    // Available functionals: own raw coordinates, then neighbours' shared
    // estimates from strictly earlier times.
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for tau in 1..=t {
        for c in 0..q {
            let mut row = DVector::zeros(universe);
            row[coord(MeasurementId::new(agent, tau), c)] = 1.0;
            rows.push(row);
        }
    }
    for &j in topo.neighbours(agent) {
        for tau in 1..t {
            let info = oracle_information_set(&hops, j, tau, None)?;
            let map = coefficient_map(model, &info)?;
            for r in 0..p {
                let mut row = DVector::zeros(universe);
                for (id, block) in map.coefficients() {
                    for c in 0..q {
                        row[coord(*id, c)] = block[(r, c)];
                    }
                }
                rows.push(row);
            }
        }
    }
    let mut available = DMatrix::zeros(rows.len(), universe);
    for (slot, row) in rows.iter().enumerate() {
        available.row_mut(slot).copy_from(&row.transpose());
    }

    let basis = linalg::row_space_basis(&available, SPAN_REL_TOL);
    let residual_rows = if basis.nrows() == 0 {
        target.clone()
    } else {
        &target - (&target * basis.transpose()) * &basis
    };
    let residual = residual_rows.norm();
    let reference_norm = target.norm();
    let achievable = residual <= SPAN_REL_TOL * reference_norm;

    let mut witness = Vec::new();
    if !achievable {
        let mut weights: Vec<(f64, MeasurementId)> = Vec::new();
        for j in 1..=m {
            for tau in 1..=t {
                let id = MeasurementId::new(j, tau);
                let mut weight = 0.0;
                for c in 0..q {
                    for r in 0..p {
                        let v = residual_rows[(r, coord(id, c))];
                        weight += v * v;
                    }
                }
                if weight > 0.0 {
                    weights.push((weight.sqrt(), id));
                }
            }
        }
        let max_weight = weights.iter().map(|(w, _)| *w).fold(0.0_f64, f64::max);
        weights.retain(|(w, _)| *w >= WITNESS_REL_CUTOFF * max_weight);
        weights.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(&b.1))
        });
        witness = weights.into_iter().map(|(_, id)| id).collect();
    }

    Ok(SpanReport {
        owner: (agent, t),
        achievable,
        residual,
        reference_norm,
        witness,
    })
}
