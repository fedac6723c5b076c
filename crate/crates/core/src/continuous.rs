//! Conditional samplers for continuous domains.
//!
//! Every sampler except the rejection baseline draws a proposal for one
//! coordinate by inverting the CDF of a Chebyshev approximation to the
//! conditional density, then applies a Metropolis–Hastings correction
//! against the energy that built it. The minibatched variants (PGDA, PGITS)
//! use the Poisson-minibatch energy; Gibbs-DA and Gibbs-ITS use the full
//! local energy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auxiliary::{minibatch_energy_at, AuxAssignment, AuxTables};
use crate::cheb::{default_floor, ChebPoly, NormalizedCdf};
use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, State};
use crate::step::StepReport;

/// Envelope `w` for the rejection baseline, as `log w` over `exp(U)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    /// `Σ_{A[i]} M_φ`, always valid since `φ ≤ M_φ`.
    LocalBound,
    /// A fixed `log w`; violated draws raise an error.
    LogConstant { log_w: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSamplerConfig {
    /// Degree of the energy interpolant (PGDA, Gibbs-DA) or the density
    /// interpolant (PGITS, Gibbs-ITS).
    pub m: usize,
    /// Degree of the density interpolant built on top of the energy one.
    pub k: usize,
    pub envelope: Envelope,
    /// Rejection proposals before the step gives up and keeps `x`.
    pub max_trials: u64,
}

impl Default for ContinuousSamplerConfig {
    fn default() -> Self {
        ContinuousSamplerConfig { m: 16, k: 64, envelope: Envelope::LocalBound, max_trials: 1_000_000 }
    }
}

impl ContinuousSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.k < 1 {
            return Err(Error::InvalidParameter(format!("degrees must be >= 1, got m={}, k={}", self.m, self.k)));
        }
        if self.max_trials == 0 {
            return Err(Error::InvalidParameter("max_trials must be positive".into()));
        }
        if let Envelope::LogConstant { log_w } = self.envelope {
            if !log_w.is_finite() {
                return Err(Error::InvalidParameter(format!("envelope log w must be finite, got {log_w}")));
            }
        }
        Ok(())
    }
}

/// How the proposal density is built from the energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pipeline {
    /// Energy interpolant of degree m, then density interpolant of degree k.
    Double,
    /// One density interpolant of degree m.
    Single,
}

fn interval(g: &FactorGraph) -> Result<(f64, f64)> {
    g.domain().interval().ok_or(Error::WrongDomain { expected: "continuous" })
}

/// Proposal CDF built from energies at the degree-m nodes.
fn build_proposal(node_energies: &[f64], pipeline: Pipeline, k: usize, a: f64, b: f64) -> Result<NormalizedCdf> {
    let density = match pipeline {
        Pipeline::Single => {
            let c = node_energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let vals: Vec<f64> = node_energies.iter().map(|u| (u - c).exp()).collect();
            ChebPoly::from_node_values(&vals, a, b)?
        }
        Pipeline::Double => {
            let energy = ChebPoly::from_node_values(node_energies, a, b)?;
            let at_nodes: Vec<f64> = ChebPoly::nodes(k, a, b).into_iter().map(|v| energy.eval(v)).collect();
            let c = at_nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let vals: Vec<f64> = at_nodes.iter().map(|u| (u - c).exp()).collect();
            ChebPoly::from_node_values(&vals, a, b)?
        }
    };
    NormalizedCdf::new(&density, default_floor(&density))
}

/// Proposal, inversion and M-H correction for coordinate `i`, given an
/// energy oracle over its value. Returns the report without cost fields.
fn corrected_update<R, F>(
    g: &FactorGraph,
    i: usize,
    x: &mut State,
    pipeline: Pipeline,
    cfg: &ContinuousSamplerConfig,
    rng: &mut R,
    mut energy: F,
) -> Result<StepReport>
where
    R: Rng + ?Sized,
    F: FnMut(&mut [f64], f64) -> Result<f64>,
{
    let (a, b) = interval(g)?;
    let current = x.0[i];
    let mut work = x.0.clone();
    let node_energies = ChebPoly::nodes(cfg.m, a, b)
        .into_iter()
        .map(|v| energy(&mut work, v))
        .collect::<Result<Vec<f64>>>()?;
    let proposal = build_proposal(&node_energies, pipeline, cfg.k, a, b)?;
    let v = proposal.invert(rng.random::<f64>());
    let log_p = energy(&mut work, v)? - energy(&mut work, current)? + proposal.density(current).ln()
        - proposal.density(v).ln();
    if log_p.is_nan() {
        return Err(Error::NonFiniteProposal);
    }
    let accept_prob = log_p.min(0.0).exp();
    let accepted = rng.random::<f64>() < accept_prob;
    if accepted {
        x.0[i] = v;
    }
    Ok(StepReport { variable: i, accepted, accept_prob, trials: 1, ..StepReport::default() })
}

#[allow(clippy::too_many_arguments)]
fn minibatched<R: Rng + ?Sized>(
    g: &FactorGraph,
    tables: &AuxTables,
    cfg: &ContinuousSamplerConfig,
    pipeline: Pipeline,
    i: usize,
    x: &mut State,
    rng: &mut R,
    scratch: &mut AuxAssignment,
) -> Result<StepReport> {
    cfg.validate()?;
    interval(g)?;
    let aux_evals = tables.variable(i).sample_into(g, &x.0, rng, scratch)?;
    let mb = tables.config();
    let s: &AuxAssignment = scratch;
    let mut report = corrected_update(g, i, x, pipeline, cfg, rng, |work, v| {
        work[i] = v;
        minibatch_energy_at(g, mb, work, s)
    })?;
    report.minibatch_size = s.len();
    report.factor_evals = aux_evals + ((cfg.m + 3) * s.len()) as u64;
    Ok(report)
}

fn full<R: Rng + ?Sized>(
    g: &FactorGraph,
    cfg: &ContinuousSamplerConfig,
    pipeline: Pipeline,
    i: usize,
    x: &mut State,
    rng: &mut R,
) -> Result<StepReport> {
    cfg.validate()?;
    interval(g)?;
    let mut report = corrected_update(g, i, x, pipeline, cfg, rng, |work, v| {
        work[i] = v;
        g.local_energy_raw(i, work)
    })?;
    report.factor_evals = ((cfg.m + 3) * g.adjacent(i).len()) as u64;
    Ok(report)
}

/// Poisson-Gibbs update of variable `i` with a double Chebyshev approximation
/// (energy of degree `m`, density of degree `k`) and an M-H correction on the
/// minibatch energy.
pub fn pgda_update<R: Rng + ?Sized>(
    g: &FactorGraph,
    tables: &AuxTables,
    cfg: &ContinuousSamplerConfig,
    i: usize,
    x: &mut State,
    rng: &mut R,
    scratch: &mut AuxAssignment,
) -> Result<StepReport> {
    minibatched(g, tables, cfg, Pipeline::Double, i, x, rng, scratch)
}

/// One random-scan step of [`pgda_update`].
pub fn pgda_step<R: Rng + ?Sized>(
    g: &FactorGraph,
    tables: &AuxTables,
    cfg: &ContinuousSamplerConfig,
    x: &mut State,
    rng: &mut R,
    scratch: &mut AuxAssignment,
) -> Result<StepReport> {
    let i = rng.random_range(0..g.num_variables());
    pgda_update(g, tables, cfg, i, x, rng, scratch)
}

/// Poisson-Gibbs update of variable `i` with a single degree-`m` interpolant
/// of the minibatch density.
pub fn pgits_update<R: Rng + ?Sized>(
    g: &FactorGraph,
    tables: &AuxTables,
    cfg: &ContinuousSamplerConfig,
    i: usize,
    x: &mut State,
    rng: &mut R,
    scratch: &mut AuxAssignment,
) -> Result<StepReport> {
    minibatched(g, tables, cfg, Pipeline::Single, i, x, rng, scratch)
}

/// One random-scan step of [`pgits_update`].
pub fn pgits_step<R: Rng + ?Sized>(
    g: &FactorGraph,
    tables: &AuxTables,
    cfg: &ContinuousSamplerConfig,
    x: &mut State,
    rng: &mut R,
    scratch: &mut AuxAssignment,
) -> Result<StepReport> {
    let i = rng.random_range(0..g.num_variables());
    pgits_update(g, tables, cfg, i, x, rng, scratch)
}

/// Gibbs update of variable `i` with a single degree-`m` interpolant of the
/// full conditional density.
pub fn gibbs_its_update<R: Rng + ?Sized>(
    g: &FactorGraph,
    cfg: &ContinuousSamplerConfig,
    i: usize,
    x: &mut State,
    rng: &mut R,
) -> Result<StepReport> {
    full(g, cfg, Pipeline::Single, i, x, rng)
}

/// One random-scan step of [`gibbs_its_update`].
pub fn gibbs_its_step<R: Rng + ?Sized>(
    g: &FactorGraph,
    cfg: &ContinuousSamplerConfig,
    x: &mut State,
    rng: &mut R,
) -> Result<StepReport> {
    let i = rng.random_range(0..g.num_variables());
    gibbs_its_update(g, cfg, i, x, rng)
}

/// Gibbs update of variable `i` with the double approximation on the full
/// local energy.
pub fn gibbs_da_update<R: Rng + ?Sized>(
    g: &FactorGraph,
    cfg: &ContinuousSamplerConfig,
    i: usize,
    x: &mut State,
    rng: &mut R,
) -> Result<StepReport> {
    full(g, cfg, Pipeline::Double, i, x, rng)
}

/// One random-scan step of [`gibbs_da_update`].
pub fn gibbs_da_step<R: Rng + ?Sized>(
    g: &FactorGraph,
    cfg: &ContinuousSamplerConfig,
    x: &mut State,
    rng: &mut R,
) -> Result<StepReport> {
    let i = rng.random_range(0..g.num_variables());
    gibbs_da_update(g, cfg, i, x, rng)
}

/// Exact conditional draw of variable `i` by rejection from a uniform
/// proposal scaled by the envelope. Gives up after `max_trials` proposals and
/// reports `accepted = false`.
pub fn rejection_update<R: Rng + ?Sized>(
    g: &FactorGraph,
    cfg: &ContinuousSamplerConfig,
    i: usize,
    x: &mut State,
    rng: &mut R,
) -> Result<StepReport> {
    cfg.validate()?;
    let (a, b) = interval(g)?;
    let log_w = match cfg.envelope {
        Envelope::LocalBound => g.stats().local_bounds[i],
        Envelope::LogConstant { log_w } => log_w,
    };
    let degree = g.adjacent(i).len() as u64;
    let mut work = x.0.clone();
    for trial in 1..=cfg.max_trials {
        let v = rng.random_range(a..=b);
        work[i] = v;
        let ratio = (g.local_energy_raw(i, &work)? - log_w).exp();
        if ratio > 1.0 + 1e-9 {
            return Err(Error::EnvelopeViolation { ratio });
        }
        if rng.random::<f64>() < ratio {
            x.0[i] = v;
            return Ok(StepReport {
                variable: i,
                minibatch_size: 0,
                factor_evals: trial * degree,
                accepted: true,
                accept_prob: 1.0,
                trials: trial,
            });
        }
    }
    log::warn!("rejection sampler hit max_trials={} on variable {i}", cfg.max_trials);
    Ok(StepReport {
        variable: i,
        minibatch_size: 0,
        factor_evals: cfg.max_trials * degree,
        accepted: false,
        accept_prob: 0.0,
        trials: cfg.max_trials,
    })
}

/// One random-scan step of [`rejection_update`].
pub fn rejection_step<R: Rng + ?Sized>(
    g: &FactorGraph,
    cfg: &ContinuousSamplerConfig,
    x: &mut State,
    rng: &mut R,
) -> Result<StepReport> {
    let i = rng.random_range(0..g.num_variables());
    rejection_update(g, cfg, i, x, rng)
}
