//! Plain and Poisson-minibatched Gibbs updates on discrete domains.
//!
//! Both samplers pick a variable uniformly at random (random scan), score
//! every label, and draw the new label exactly from the softmax of the
//! scores. Plain Gibbs scores label `v` with the local energy; Poisson-Gibbs
//! scores it with the minibatch energy of freshly drawn auxiliary counts.

use rand::Rng;

use crate::auxiliary::{minibatch_energy_at, AuxAssignment, AuxTables};
use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, State};
use crate::step::{sample_softmax, softmax, StepReport};

fn labels(g: &FactorGraph) -> Result<usize> {
    g.domain().labels().ok_or(Error::WrongDomain { expected: "discrete" })
}

/// Local energies `U_v` of variable `i` for every label; `x` is left unchanged.
pub fn local_energies(g: &FactorGraph, i: usize, x: &mut State) -> Result<Vec<f64>> {
    let d = labels(g)?;
    let saved = x.0[i];
    let mut out = Vec::with_capacity(d);
    for v in 0..d {
        x.0[i] = v as f64;
        match g.local_energy_raw(i, &x.0) {
            Ok(u) => out.push(u),
            Err(e) => {
                x.0[i] = saved;
                return Err(e);
            }
        }
    }
    x.0[i] = saved;
    Ok(out)
}

/// Exact full conditional of variable `i` under plain Gibbs.
pub fn gibbs_conditional(g: &FactorGraph, i: usize, x: &mut State) -> Result<Vec<f64>> {
    Ok(softmax(&local_energies(g, i, x)?))
}

/// Minibatch energies of variable `i` for every label given counts `s`.
pub fn minibatch_energies(g: &FactorGraph, tables: &AuxTables, i: usize, x: &mut State, s: &AuxAssignment) -> Result<Vec<f64>> {
    let d = labels(g)?;
    let saved = x.0[i];
    let mut out = Vec::with_capacity(d);
    for v in 0..d {
        x.0[i] = v as f64;
        match minibatch_energy_at(g, tables.config(), &x.0, s) {
            Ok(u) => out.push(u),
            Err(e) => {
                x.0[i] = saved;
                return Err(e);
            }
        }
    }
    x.0[i] = saved;
    Ok(out)
}

/// Resamples variable `i` from its exact conditional. Costs `D·|A[i]|`
/// factor evaluations.
pub fn gibbs_update<R: Rng + ?Sized>(g: &FactorGraph, i: usize, x: &mut State, rng: &mut R) -> Result<StepReport> {
    let energies = local_energies(g, i, x)?;
    x.0[i] = sample_softmax(&energies, rng) as f64;
    let evals = (energies.len() * g.adjacent(i).len()) as u64;
    Ok(StepReport::exact(i, 0, evals))
}

/// One random-scan plain Gibbs step.
pub fn gibbs_step<R: Rng + ?Sized>(g: &FactorGraph, x: &mut State, rng: &mut R) -> Result<StepReport> {
    let i = rng.random_range(0..g.num_variables());
    gibbs_update(g, i, x, rng)
}

/// Poisson-Gibbs update of variable `i`, reusing `scratch` for the counts.
pub fn poisson_gibbs_update<R: Rng + ?Sized>(
    g: &FactorGraph,
    tables: &AuxTables,
    i: usize,
    x: &mut State,
    rng: &mut R,
    scratch: &mut AuxAssignment,
) -> Result<StepReport> {
    let aux_evals = tables.variable(i).sample_into(g, &x.0, rng, scratch)?;
    let energies = minibatch_energies(g, tables, i, x, scratch)?;
    x.0[i] = sample_softmax(&energies, rng) as f64;
    let evals = aux_evals + (energies.len() * scratch.len()) as u64;
    Ok(StepReport::exact(i, scratch.len(), evals))
}

/// One random-scan Poisson-Gibbs step.
pub fn poisson_gibbs_step<R: Rng + ?Sized>(
    g: &FactorGraph,
    tables: &AuxTables,
    x: &mut State,
    rng: &mut R,
    scratch: &mut AuxAssignment,
) -> Result<StepReport> {
    let i = rng.random_range(0..g.num_variables());
    poisson_gibbs_update(g, tables, i, x, rng, scratch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxiliary::{build_aux_tables, MinibatchConfig};
    use crate::factor_graph::{Domain, Factor, FactorKind};
    use crate::rng::chain_rng;

    fn log3_model() -> FactorGraph {
        FactorGraph::new(
            Domain::discrete(2).unwrap(),
            1,
            vec![Factor::new(FactorKind::Table { values: vec![0.0, 3f64.ln()] }, vec![0], 3f64.ln())],
        )
        .unwrap()
    }

    #[test]
    fn conditional_from_hand_softmax() {
        let g = log3_model();
        let mut x = State::from_labels(&[0]);
        let p = gibbs_conditional(&g, 0, &mut x).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn flat_energies_give_uniform_conditional() {
        let g = FactorGraph::new(
            Domain::discrete(4).unwrap(),
            2,
            vec![Factor::new(FactorKind::Table { values: vec![1.0; 4] }, vec![0], 1.0)],
        )
        .unwrap();
        let mut x = State::from_labels(&[2, 1]);
        assert!(gibbs_conditional(&g, 0, &mut x).unwrap().iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn plain_step_cost_is_labels_times_degree() {
        let g = FactorGraph::new(
            Domain::discrete(3).unwrap(),
            3,
            vec![
                Factor::new(FactorKind::PottsPair { weight: 1.0 }, vec![0, 1], 1.0),
                Factor::new(FactorKind::PottsPair { weight: 1.0 }, vec![1, 2], 1.0),
            ],
        )
        .unwrap();
        let mut rng = chain_rng(1, 0);
        let mut x = State::from_labels(&[0, 0, 0]);
        for _ in 0..200 {
            let r = gibbs_step(&g, &mut x, &mut rng).unwrap();
            assert_eq!(r.factor_evals, 3 * g.adjacent(r.variable).len() as u64);
        }
    }

    #[test]
    fn continuous_domain_is_rejected() {
        let g = FactorGraph::new(Domain::continuous(0.0, 1.0).unwrap(), 1, vec![]).unwrap();
        let mut rng = chain_rng(1, 0);
        let mut x = State::new(vec![0.5]);
        assert!(matches!(gibbs_step(&g, &mut x, &mut rng), Err(Error::WrongDomain { .. })));
    }

    #[test]
    fn empty_minibatch_draws_uniformly() {
        let g = log3_model();
        let tables = build_aux_tables(&g, MinibatchConfig::new(1.0).unwrap()).unwrap();
        let mut x = State::from_labels(&[1]);
        let s = AuxAssignment::new(1);
        let u = minibatch_energies(&g, &tables, 0, &mut x, &s).unwrap();
        assert_eq!(u, vec![0.0, 0.0]);
    }

    #[test]
    fn poisson_step_accounting() {
        let g = log3_model();
        let tables = build_aux_tables(&g, MinibatchConfig::new(4.0).unwrap()).unwrap();
        let mut rng = chain_rng(8, 0);
        let mut x = State::from_labels(&[0]);
        let mut scratch = AuxAssignment::new(1);
        for _ in 0..500 {
            let r = poisson_gibbs_step(&g, &tables, &mut x, &mut rng, &mut scratch).unwrap();
            assert!(r.minibatch_size <= 1);
            assert!(r.factor_evals >= 2 * r.minibatch_size as u64);
        }
    }
}
