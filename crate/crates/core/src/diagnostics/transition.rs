use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::auxiliary::{build_aux_tables, build_global_table, AuxAssignment, MinibatchConfig};
use crate::discrete::{gibbs_conditional, poisson_gibbs_step};
use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, State};
use crate::mh::{poisson_mh_step, Proposal, ProposalKernel};
use crate::rng::{chain_rng, ChainRng};
use crate::step::softmax;

/// Largest joint state space the oracles will enumerate.
pub const MAX_STATES: usize = 4096;

/// All joint states of a discrete graph. Variable 0 is the least
/// significant digit of the state index.
pub fn enumerate_states(g: &FactorGraph) -> Result<Vec<State>> {
    let d = g.domain().labels().ok_or(Error::WrongDomain { expected: "discrete" })?;
    let n = g.num_variables();
    let size = (d as f64).powi(n as i32);
    if size > MAX_STATES as f64 {
        return Err(Error::StateSpaceTooLarge { size, limit: MAX_STATES });
    }
    Ok((0..size as usize)
        .map(|mut idx| {
            State::from_labels(
                &(0..n)
                    .map(|_| {
                        let v = idx % d;
                        idx /= d;
                        v
                    })
                    .collect::<Vec<_>>(),
            )
        })
        .collect())
}

pub fn state_index(x: &State, labels: usize) -> usize {
    x.0.iter().rev().fold(0, |acc, &v| acc * labels + v as usize)
}

/// Exact `π(x) ∝ exp(U(x))` over [`enumerate_states`].
pub fn exact_distribution(g: &FactorGraph) -> Result<Vec<f64>> {
    let energies = enumerate_states(g)?.iter().map(|x| g.energy(x)).collect::<Result<Vec<_>>>()?;
    Ok(softmax(&energies))
}

/// Row-stochastic matrix over enumerated states.
pub type Kernel = DMatrix<f64>;

/// Exact random-scan Gibbs kernel.
pub fn exact_gibbs_kernel(g: &FactorGraph) -> Result<Kernel> {
    let states = enumerate_states(g)?;
    let d = g.domain().labels().expect("enumerate_states checked the domain");
    let n = g.num_variables();
    let mut t = DMatrix::zeros(states.len(), states.len());
    for (row, x) in states.iter().enumerate() {
        let mut work = x.clone();
        for i in 0..n {
            let p = gibbs_conditional(g, i, &mut work)?;
            for (v, pv) in p.iter().enumerate() {
                let mut y = x.clone();
                y.0[i] = v as f64;
                t[(row, state_index(&y, d))] += pv / n as f64;
            }
        }
    }
    Ok(t)
}

/// Exact Metropolis–Hastings kernel for `proposal` on the full energy.
pub fn exact_mh_kernel<P: Proposal>(g: &FactorGraph, proposal: &P) -> Result<Kernel> {
    let states = enumerate_states(g)?;
    let energies = states.iter().map(|x| g.energy(x)).collect::<Result<Vec<_>>>()?;
    let k = states.len();
    let mut t = DMatrix::zeros(k, k);
    for a in 0..k {
        let mut stay = 1.0;
        for b in 0..k {
            if a == b {
                continue;
            }
            let forward = proposal.log_density(g, &states[a].0, &states[b].0);
            if forward == f64::NEG_INFINITY {
                continue;
            }
            let backward = proposal.log_density(g, &states[b].0, &states[a].0);
            let accept = (energies[b] - energies[a] + backward - forward).min(0.0).exp();
            let p = forward.exp() * accept;
            t[(a, b)] = p;
            stay -= p;
        }
        t[(a, a)] = stay;
    }
    Ok(t)
}

/// Monte Carlo one-step transition matrix.
#[derive(Clone, Debug)]
pub struct TransitionEstimate {
    pub matrix: Kernel,
    /// `√(p̂(1−p̂)/n)` per entry.
    pub std_errors: Kernel,
    pub draws_per_state: usize,
}

/// Estimates `T` by running `draws_per_state` independent one-step moves
/// from every enumerated state. Row `r` uses the rng stream `r` of `seed`.
/// `make_stepper` builds one stepper per row so steppers may own scratch.
pub fn estimate_transition_matrix<F, S>(
    g: &FactorGraph,
    draws_per_state: usize,
    seed: u64,
    make_stepper: F,
) -> Result<TransitionEstimate>
where
    F: Fn() -> S + Sync,
    S: FnMut(&mut State, &mut ChainRng) -> Result<()>,
{
    if draws_per_state == 0 {
        return Err(Error::InvalidParameter("draws_per_state must be positive".into()));
    }
    let states = enumerate_states(g)?;
    let d = g.domain().labels().expect("enumerate_states checked the domain");
    let k = states.len();
    let rows = states
        .par_iter()
        .enumerate()
        .map(|(r, start)| {
            let mut step = make_stepper();
            let mut rng = chain_rng(seed, r as u64);
            let mut counts = vec![0u64; k];
            let mut x = start.clone();
            for _ in 0..draws_per_state {
                x.0.copy_from_slice(&start.0);
                step(&mut x, &mut rng)?;
                counts[state_index(&x, d)] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = draws_per_state as f64;
    let matrix = DMatrix::from_fn(k, k, |r, c| rows[r][c] as f64 / n);
    let std_errors = matrix.map(|p| (p * (1.0 - p) / n).sqrt());
    Ok(TransitionEstimate { matrix, std_errors, draws_per_state })
}

/// `max_{x≠y} |π(x)T(x,y) − π(y)T(y,x)|`.
pub fn detailed_balance_residual(t: &Kernel, pi: &[f64]) -> f64 {
    let k = pi.len();
    let mut worst = 0.0f64;
    for a in 0..k {
        for b in (a + 1)..k {
            worst = worst.max((pi[a] * t[(a, b)] - pi[b] * t[(b, a)]).abs());
        }
    }
    worst
}

/// `‖πT − π‖₁`.
pub fn stationarity_residual(t: &Kernel, pi: &[f64]) -> f64 {
    let k = pi.len();
    (0..k).map(|b| ((0..k).map(|a| pi[a] * t[(a, b)]).sum::<f64>() - pi[b]).abs()).sum()
}

/// Spectral gap `1 − λ₂` with its eigen-decomposition.
#[derive(Clone, Debug)]
pub struct GapResult {
    pub gap: f64,
    pub second_eigenvalue: f64,
    /// Unit eigenvector of `λ₂` in the symmetrized basis.
    pub eigenvector: Vec<f64>,
}

/// `1 − λ₂` of `D^{1/2} T D^{−1/2}` (symmetrized), `D = diag(π)`. Fails when
/// the detailed-balance residual exceeds `tolerance`.
pub fn spectral_gap(t: &Kernel, pi: &[f64], tolerance: f64) -> Result<GapResult> {
    let k = pi.len();
    if t.nrows() != k || t.ncols() != k {
        return Err(Error::BinMismatch(t.nrows(), k));
    }
    let residual = detailed_balance_residual(t, pi);
    if residual > tolerance {
        return Err(Error::NotReversible { residual, tolerance });
    }
    let root: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let s = DMatrix::from_fn(k, k, |a, b| {
        0.5 * (root[a] / root[b] * t[(a, b)] + root[b] / root[a] * t[(b, a)])
    });
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let idx = *order.get(1).unwrap_or(&order[0]);
    let second = eig.eigenvalues[idx];
    Ok(GapResult { gap: 1.0 - second, second_eigenvalue: second, eigenvector: eig.eigenvectors.column(idx).iter().copied().collect() })
}

/// Delta-method standard error of the gap of an estimated kernel. Rows are
/// independent multinomials with `draws_per_state` draws.
pub fn gap_std_error(est: &TransitionEstimate, pi: &[f64], gap: &GapResult) -> f64 {
    let k = pi.len();
    let v = &gap.eigenvector;
    let n = est.draws_per_state as f64;
    let mut var = 0.0;
    for a in 0..k {
        let (mut m1, mut m2) = (0.0, 0.0);
        for b in 0..k {
            let grad = v[a] * v[b] * (pi[a] / pi[b]).sqrt();
            let p = est.matrix[(a, b)];
            m1 += grad * p;
            m2 += grad * grad * p;
        }
        var += (m2 - m1 * m1).max(0.0) / n;
    }
    var.sqrt()
}

/// Outcome of a σ-scaled residual test.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualCheck {
    pub value: f64,
    pub sigma: f64,
    pub pass: bool,
}

/// Per-entry variance of an estimated probability, floored at `p̂ = 1/n`.
fn entry_var(p: f64, n: f64) -> f64 {
    let p = p.max(1.0 / n);
    p * (1.0 - p) / n
}

fn pair_sigma(est: &TransitionEstimate, pi: &[f64], a: usize, b: usize) -> f64 {
    let n = est.draws_per_state as f64;
    let t = &est.matrix;
    (pi[a] * pi[a] * entry_var(t[(a, b)], n) + pi[b] * pi[b] * entry_var(t[(b, a)], n)).sqrt()
}

/// Largest standard error of any pairwise detailed-balance residual.
pub fn max_pair_sigma(est: &TransitionEstimate, pi: &[f64]) -> f64 {
    let k = pi.len();
    (0..k).flat_map(|a| ((a + 1)..k).map(move |b| (a, b))).map(|(a, b)| pair_sigma(est, pi, a, b)).fold(0.0, f64::max)
}

/// Largest detailed-balance residual in units of its own standard error;
/// passes when every pair is within `z` standard errors.
pub fn check_detailed_balance(est: &TransitionEstimate, pi: &[f64], z: f64) -> ResidualCheck {
    let k = pi.len();
    let t = &est.matrix;
    let (mut worst_z, mut value, mut sigma) = (0.0f64, 0.0, 0.0);
    for a in 0..k {
        for b in (a + 1)..k {
            let r = (pi[a] * t[(a, b)] - pi[b] * t[(b, a)]).abs();
            let s = pair_sigma(est, pi, a, b);
            if r / s > worst_z {
                worst_z = r / s;
                value = r;
                sigma = s;
            }
        }
    }
    ResidualCheck { value, sigma, pass: worst_z <= z }
}

/// `‖πT̂ − π‖₁` against `z` times the summed per-state standard errors.
pub fn check_stationarity(est: &TransitionEstimate, pi: &[f64], z: f64) -> ResidualCheck {
    let k = pi.len();
    let n = est.draws_per_state as f64;
    let value = stationarity_residual(&est.matrix, pi);
    let sigma: f64 = (0..k)
        .map(|b| (0..k).map(|a| pi[a] * pi[a] * entry_var(est.matrix[(a, b)], n)).sum::<f64>().sqrt())
        .sum();
    ResidualCheck { value, sigma, pass: value <= z * sigma }
}

/// `γ̄ ≥ factor·γ − 5σ` comparison.
#[derive(Clone, Debug, Serialize)]
pub struct GapCheck {
    pub lambda: f64,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub sigma: f64,
    pub factor: f64,
    pub bound: f64,
    pub pass: bool,
}

fn gap_check(exact: &Kernel, est: &TransitionEstimate, pi: &[f64], lambda: f64, factor: f64) -> Result<GapCheck> {
    let gamma = spectral_gap(exact, pi, 1e-10)?.gap;
    let result = spectral_gap(&est.matrix, pi, 5.0 * max_pair_sigma(est, pi))?;
    let sigma = gap_std_error(est, pi, &result);
    let bound = factor * gamma;
    Ok(GapCheck { lambda, gamma, gamma_bar: result.gap, sigma, factor, bound, pass: result.gap >= bound - 5.0 * sigma })
}

/// Per-row Poisson-Gibbs transition estimate.
pub fn estimate_poisson_gibbs(g: &FactorGraph, lambda: f64, draws: usize, seed: u64) -> Result<TransitionEstimate> {
    let tables = build_aux_tables(g, MinibatchConfig::new(lambda)?)?;
    estimate_transition_matrix(g, draws, seed, || {
        let mut scratch = AuxAssignment::new(g.num_factors());
        let tables = &tables;
        move |x: &mut State, rng: &mut ChainRng| poisson_gibbs_step(g, tables, x, rng, &mut scratch).map(|_| ())
    })
}

/// Per-row Poisson-MH transition estimate.
pub fn estimate_poisson_mh<P: Proposal + Sync>(
    g: &FactorGraph,
    proposal: &P,
    lambda: f64,
    draws: usize,
    seed: u64,
) -> Result<TransitionEstimate> {
    let cfg = MinibatchConfig::new(lambda)?;
    let table = build_global_table(g, cfg)?;
    estimate_transition_matrix(g, draws, seed, || {
        let mut scratch = AuxAssignment::new(g.num_factors());
        let table = &table;
        move |x: &mut State, rng: &mut ChainRng| poisson_mh_step(g, table, cfg, proposal, x, rng, &mut scratch).map(|_| ())
    })
}

/// Poisson-Gibbs gap against `exp(−4L²/λ)` times the exact Gibbs gap.
pub fn check_gibbs_gap_bound(g: &FactorGraph, lambda: f64, draws: usize, seed: u64) -> Result<GapCheck> {
    let pi = exact_distribution(g)?;
    let l = g.stats().local_max_energy;
    let est = estimate_poisson_gibbs(g, lambda, draws, seed)?;
    gap_check(&exact_gibbs_kernel(g)?, &est, &pi, lambda, (-4.0 * l * l / lambda).exp())
}

/// Poisson-MH gap (uniform joint proposal) against `½exp(−L²/(λ+L))` times
/// the exact MH gap.
pub fn check_mh_gap_bound(g: &FactorGraph, lambda: f64, draws: usize, seed: u64) -> Result<GapCheck> {
    let pi = exact_distribution(g)?;
    let l = g.stats().local_max_energy;
    let proposal = ProposalKernel::UniformJoint;
    let est = estimate_poisson_mh(g, &proposal, lambda, draws, seed)?;
    gap_check(&exact_mh_kernel(g, &proposal)?, &est, &pi, lambda, 0.5 * (-l * l / (lambda + l)).exp())
}
