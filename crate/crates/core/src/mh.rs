//! Metropolis–Hastings over the joint state, exact and Poisson-minibatched.
//!
//! The minibatched variant samples auxiliary counts over every factor from a
//! single graph-wide table and accepts with
//! `log p = U_S(x*) − U_S(x) + log q(x | x*) − log q(x* | x)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::auxiliary::{minibatch_energy_at, AuxAssignment, AuxTable, MinibatchConfig};
use crate::error::{Error, Result};
use crate::factor_graph::{Domain, FactorGraph, State};
use crate::step::StepReport;

/// A proposal kernel with an evaluable density.
pub trait Proposal {
    /// Draws `x* ~ q(· | x)`. The result may leave the domain.
    fn propose<R: Rng + ?Sized>(&self, g: &FactorGraph, x: &[f64], rng: &mut R) -> Vec<f64>;

    /// `log q(to | from)`, `−∞` if unreachable.
    fn log_density(&self, g: &FactorGraph, from: &[f64], to: &[f64]) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalKernel {
    /// Every coordinate redrawn uniformly over the domain.
    UniformJoint,
    /// One uniformly chosen coordinate redrawn uniformly over the domain.
    SingleSite,
    /// `x + scale · N(0, I)`; continuous domains only.
    Gaussian { scale: f64 },
}

impl ProposalKernel {
    pub fn validate(&self, g: &FactorGraph) -> Result<()> {
        match *self {
            ProposalKernel::Gaussian { scale } => {
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::InvalidParameter(format!("proposal scale must be positive, got {scale}")));
                }
                if g.domain().is_discrete() {
                    return Err(Error::WrongDomain { expected: "continuous" });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn draw_uniform<R: Rng + ?Sized>(domain: Domain, rng: &mut R) -> f64 {
    match domain {
        Domain::Discrete { labels } => rng.random_range(0..labels) as f64,
        Domain::Continuous { lower, upper } => rng.random_range(lower..=upper),
    }
}

/// `log` of the uniform density (or mass) of one coordinate.
fn uniform_log_density(domain: Domain) -> f64 {
    match domain {
        Domain::Discrete { labels } => -(labels as f64).ln(),
        Domain::Continuous { lower, upper } => -(upper - lower).ln(),
    }
}

impl Proposal for ProposalKernel {
    fn propose<R: Rng + ?Sized>(&self, g: &FactorGraph, x: &[f64], rng: &mut R) -> Vec<f64> {
        let domain = g.domain();
        match *self {
            ProposalKernel::UniformJoint => x.iter().map(|_| draw_uniform(domain, rng)).collect(),
            ProposalKernel::SingleSite => {
                let mut y = x.to_vec();
                if !y.is_empty() {
                    let i = rng.random_range(0..y.len());
                    y[i] = draw_uniform(domain, rng);
                }
                y
            }
            ProposalKernel::Gaussian { scale } => x
                .iter()
                .map(|&v| {
                    let z: f64 = StandardNormal.sample(rng);
                    v + scale * z
                })
                .collect(),
        }
    }

    fn log_density(&self, g: &FactorGraph, from: &[f64], to: &[f64]) -> f64 {
        let domain = g.domain();
        let n = from.len();
        match *self {
            ProposalKernel::UniformJoint => n as f64 * uniform_log_density(domain),
            ProposalKernel::SingleSite => {
                let changed = from.iter().zip(to).filter(|(a, b)| a != b).count();
                let per_site = uniform_log_density(domain) - (n as f64).ln();
                match (changed, domain) {
                    (0, Domain::Discrete { .. }) => uniform_log_density(domain),
                    // a continuous redraw hits the old value with probability 0
                    (0, Domain::Continuous { .. }) => f64::NEG_INFINITY,
                    (1, _) => per_site,
                    _ => f64::NEG_INFINITY,
                }
            }
            ProposalKernel::Gaussian { scale } => {
                let sq: f64 = from.iter().zip(to).map(|(a, b)| (a - b) * (a - b)).sum();
                -sq / (2.0 * scale * scale) - n as f64 * (scale * (2.0 * std::f64::consts::PI).sqrt()).ln()
            }
        }
    }
}

fn in_domain(g: &FactorGraph, y: &[f64]) -> bool {
    let domain = g.domain();
    y.iter().all(|&v| domain.contains(v))
}

fn correction<P: Proposal>(g: &FactorGraph, proposal: &P, x: &[f64], y: &[f64], energy_gap: f64) -> Result<f64> {
    let forward = proposal.log_density(g, x, y);
    let backward = proposal.log_density(g, y, x);
    if forward.is_nan() || backward.is_nan() || forward == f64::INFINITY || backward == f64::INFINITY {
        return Err(Error::NonFiniteProposal);
    }
    let log_p = energy_gap + backward - forward;
    Ok(if log_p.is_nan() { f64::NEG_INFINITY } else { log_p })
}

fn finish<R: Rng + ?Sized>(x: &mut State, y: Vec<f64>, log_p: f64, rng: &mut R, mut report: StepReport) -> StepReport {
    report.accept_prob = log_p.min(0.0).exp();
    report.accepted = rng.random::<f64>() < report.accept_prob;
    if report.accepted {
        x.0 = y;
    }
    report
}

/// Exact Metropolis–Hastings step on the full energy. Joint moves report
/// variable 0.
pub fn mh_step<P: Proposal, R: Rng + ?Sized>(
    g: &FactorGraph,
    proposal: &P,
    x: &mut State,
    rng: &mut R,
) -> Result<StepReport> {
    let y = proposal.propose(g, &x.0, rng);
    let mut report = StepReport { trials: 1, ..StepReport::default() };
    if !in_domain(g, &y) {
        report.accept_prob = 0.0;
        let _ = rng.random::<f64>();
        return Ok(report);
    }
    let u_y = g.energy(&State(y.clone()))?;
    let u_x = g.energy(x)?;
    report.factor_evals = 2 * g.num_factors() as u64;
    let log_p = correction(g, proposal, &x.0, &y, u_y - u_x)?;
    Ok(finish(x, y, log_p, rng, report))
}

/// Poisson-minibatched Metropolis–Hastings step. `table` must come from
/// [`crate::auxiliary::build_global_table`] with the same `cfg`.
pub fn poisson_mh_step<P: Proposal, R: Rng + ?Sized>(
    g: &FactorGraph,
    table: &AuxTable,
    cfg: MinibatchConfig,
    proposal: &P,
    x: &mut State,
    rng: &mut R,
    scratch: &mut AuxAssignment,
) -> Result<StepReport> {
    let aux_evals = table.sample_into(g, &x.0, rng, scratch)?;
    let y = proposal.propose(g, &x.0, rng);
    let mut report = StepReport { minibatch_size: scratch.len(), factor_evals: aux_evals, trials: 1, ..StepReport::default() };
    if !in_domain(g, &y) {
        report.accept_prob = 0.0;
        let _ = rng.random::<f64>();
        return Ok(report);
    }
    let u_y = minibatch_energy_at(g, cfg, &y, scratch)?;
    let u_x = minibatch_energy_at(g, cfg, &x.0, scratch)?;
    report.factor_evals += 2 * scratch.len() as u64;
    let log_p = correction(g, proposal, &x.0, &y, u_y - u_x)?;
    Ok(finish(x, y, log_p, rng, report))
}
