//! Factor-graph data model.
//!
//! A [`FactorGraph`] defines the Gibbs measure `π(x) ∝ exp(Σ_φ φ(x))` over a
//! homogeneous domain. Every factor carries an explicit scope and an upper
//! bound `M_φ` with `0 ≤ φ(x) ≤ M_φ`; the adjacency lists and the derived
//! statistics (`L`, `Δ`, `Ψ`) are computed once at construction.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack tolerated on factor bounds before an evaluation is reported
/// as a violation (floating-point rounding only).
const BOUND_SLACK: f64 = 1e-9;

/// Value set shared by every variable of a graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// Labels `0..labels`.
    Discrete { labels: usize },
    /// The closed interval `[lower, upper]`.
    Continuous { lower: f64, upper: f64 },
}

impl Domain {
    pub fn discrete(labels: usize) -> Result<Self> {
        let d = Domain::Discrete { labels };
        d.validate()?;
        Ok(d)
    }

    pub fn continuous(lower: f64, upper: f64) -> Result<Self> {
        let d = Domain::Continuous { lower, upper };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Discrete { labels } if labels < 2 => Err(Error::InvalidDomain(format!(
                "a discrete domain needs at least 2 labels, got {labels}"
            ))),
            Domain::Continuous { lower, upper }
                if !(lower.is_finite() && upper.is_finite() && lower < upper) =>
            {
                Err(Error::InvalidDomain(format!(
                    "continuous domain [{lower}, {upper}] must be finite with lower < upper"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn labels(&self) -> Option<usize> {
        match *self {
            Domain::Discrete { labels } => Some(labels),
            Domain::Continuous { .. } => None,
        }
    }

    pub fn interval(&self) -> Option<(f64, f64)> {
        match *self {
            Domain::Continuous { lower, upper } => Some((lower, upper)),
            Domain::Discrete { .. } => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Domain::Discrete { .. })
    }

    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Domain::Discrete { labels } => v >= 0.0 && v.fract() == 0.0 && (v as usize) < labels,
            Domain::Continuous { lower, upper } => v >= lower && v <= upper,
        }
    }
}

pub type FactorFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Opaque user-supplied factor function over the scoped values.
#[derive(Clone)]
pub struct CustomFn(pub Arc<FactorFn>);

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomFn(..)")
    }
}

/// Functional form of a factor. The built-in families are serializable;
/// [`FactorKind::Custom`] is not.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FactorKind {
    /// `weight · δ(x_a, x_b)` on a pair of discrete variables.
    PottsPair { weight: f64 },
    /// `weight · (x_a · x_b + 1)` on a pair of continuous spins.
    SpinPair { weight: f64 },
    /// Shifted Gaussian log-prior `shift − x² / (2·variance)`.
    GaussianPrior { variance: f64, shift: f64 },
    /// Shifted log-likelihood of `y` under `½N(x₁, σ²) + ½N(x₁ + x₂, σ²)`,
    /// dropping the normalizing constant.
    TiedMixtureLikelihood { y: f64, variance: f64, shift: f64 },
    /// Lookup `values[x]` on one discrete variable.
    Table { values: Vec<f64> },
    #[serde(skip)]
    Custom(CustomFn),
}

/// Log of `½exp(−qa) + ½exp(−qb)` without underflow.
pub(crate) fn log_half_mixture(qa: f64, qb: f64) -> f64 {
    let lo = qa.min(qb);
    let gap = (qa - qb).abs();
    -lo + (0.5 * (1.0 + (-gap).exp())).ln()
}

impl FactorKind {
    /// Raw (unchecked) value on the given full state.
    #[inline]
    fn value(&self, scope: &[usize], x: &[f64]) -> f64 {
        match self {
            FactorKind::PottsPair { weight } => {
                if x[scope[0]] == x[scope[1]] {
                    *weight
                } else {
                    0.0
                }
            }
            FactorKind::SpinPair { weight } => weight * (x[scope[0]] * x[scope[1]] + 1.0),
            FactorKind::GaussianPrior { variance, shift } => {
                let v = x[scope[0]];
                shift - v * v / (2.0 * variance)
            }
            FactorKind::TiedMixtureLikelihood { y, variance, shift } => {
                let x1 = x[scope[0]];
                let x2 = x[scope[1]];
                let da = y - x1;
                let db = y - x1 - x2;
                let s = 2.0 * variance;
                shift + log_half_mixture(da * da / s, db * db / s)
            }
            FactorKind::Table { values } => values[x[scope[0]] as usize],
            FactorKind::Custom(f) => {
                let local: Vec<f64> = scope.iter().map(|&j| x[j]).collect();
                (f.0)(&local)
            }
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            FactorKind::PottsPair { .. }
            | FactorKind::SpinPair { .. }
            | FactorKind::TiedMixtureLikelihood { .. } => Some(2),
            FactorKind::GaussianPrior { .. } | FactorKind::Table { .. } => Some(1),
            FactorKind::Custom(_) => None,
        }
    }
}

/// A bounded, nonnegative energy term over an ordered scope of variables.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Factor {
    pub kind: FactorKind,
    pub scope: Vec<usize>,
    /// Upper bound `M_φ`.
    pub bound: f64,
}

impl Factor {
    pub fn new(kind: FactorKind, scope: Vec<usize>, bound: f64) -> Self {
        Factor { kind, scope, bound }
    }

    pub fn custom<F>(scope: Vec<usize>, bound: f64, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Factor::new(FactorKind::Custom(CustomFn(Arc::new(f))), scope, bound)
    }
}

/// An assignment of every variable. Discrete labels are stored as exact
/// integral `f64` values so that all factor families share one evaluator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State(pub Vec<f64>);

impl State {
    pub fn new(values: Vec<f64>) -> Self {
        State(values)
    }

    pub fn from_labels(labels: &[usize]) -> Self {
        State(labels.iter().map(|&l| l as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn label(&self, i: usize) -> usize {
        self.0[i] as usize
    }

    /// Uniformly random state in the graph's domain.
    pub fn random<R: Rng + ?Sized>(g: &FactorGraph, rng: &mut R) -> Self {
        let values = (0..g.num_variables())
            .map(|_| match g.domain() {
                Domain::Discrete { labels } => rng.random_range(0..labels) as f64,
                Domain::Continuous { lower, upper } => rng.random_range(lower..=upper),
            })
            .collect();
        State(values)
    }

    pub fn validate(&self, g: &FactorGraph) -> Result<()> {
        if self.0.len() != g.num_variables() {
            return Err(Error::InvalidState(format!(
                "state has {} entries, graph has {} variables",
                self.0.len(),
                g.num_variables()
            )));
        }
        if let Some((i, v)) = self.0.iter().enumerate().find(|(_, v)| !g.domain().contains(**v)) {
            return Err(Error::InvalidState(format!("variable {i} = {v} is outside the domain")));
        }
        Ok(())
    }
}

/// Derived statistics consumed by every minibatched sampler.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    /// `L = max_i Σ_{φ∈A[i]} M_φ`.
    pub local_max_energy: f64,
    /// `Δ = max_i |A[i]|`.
    pub max_degree: usize,
    /// `Ψ = Σ_φ M_φ`.
    pub total_max_energy: f64,
    /// `Σ_{φ∈A[i]} M_φ` for each variable.
    pub local_bounds: Vec<f64>,
    pub domain: Domain,
}

/// Immutable factor graph with a homogeneous domain.
#[derive(Clone, Debug)]
pub struct FactorGraph {
    domain: Domain,
    factors: Vec<Factor>,
    adjacency: Vec<Vec<usize>>,
    stats: GraphStats,
    /// `1 / M_φ`, or 0 for a zero bound.
    inv_bounds: Vec<f64>,
}

impl FactorGraph {
    pub fn new(domain: Domain, num_variables: usize, factors: Vec<Factor>) -> Result<Self> {
        domain.validate()?;
        if num_variables == 0 {
            return Err(Error::InvalidModel("a graph needs at least one variable".into()));
        }
        let mut adjacency = vec![Vec::new(); num_variables];
        for (idx, factor) in factors.iter().enumerate() {
            if !(factor.bound.is_finite() && factor.bound >= 0.0) {
                return Err(Error::InvalidModel(format!(
                    "factor {idx} has invalid bound {}",
                    factor.bound
                )));
            }
            if factor.scope.is_empty() {
                return Err(Error::InvalidModel(format!("factor {idx} has an empty scope")));
            }
            if let Some(arity) = factor.kind.arity() {
                if factor.scope.len() != arity {
                    return Err(Error::InvalidModel(format!(
                        "factor {idx} expects {arity} variables, scope has {}",
                        factor.scope.len()
                    )));
                }
            }
            match (&factor.kind, domain) {
                (FactorKind::PottsPair { .. } | FactorKind::Table { .. }, Domain::Continuous { .. }) => {
                    return Err(Error::InvalidModel(format!(
                        "factor {idx} is discrete but the domain is continuous"
                    )));
                }
                (FactorKind::Table { values }, Domain::Discrete { labels }) if values.len() != labels => {
                    return Err(Error::InvalidModel(format!(
                        "factor {idx} table has {} entries for {labels} labels",
                        values.len()
                    )));
                }
                _ => {}
            }
            let mut seen: Vec<usize> = Vec::with_capacity(factor.scope.len());
            for &var in &factor.scope {
                if var >= num_variables {
                    return Err(Error::InvalidModel(format!(
                        "factor {idx} references variable {var} of {num_variables}"
                    )));
                }
                if !seen.contains(&var) {
                    seen.push(var);
                    adjacency[var].push(idx);
                }
            }
        }
        let stats = compute_stats(domain, &factors, &adjacency);
        let inv_bounds = factors.iter().map(|f| if f.bound > 0.0 { 1.0 / f.bound } else { 0.0 }).collect();
        Ok(FactorGraph { domain, factors, adjacency, stats, inv_bounds })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn num_variables(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, idx: usize) -> &Factor {
        &self.factors[idx]
    }

    /// Factors whose scope contains variable `i` (`A[i]`).
    pub fn adjacent(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn stats(&self) -> &GraphStats {
        &self.stats
    }

    #[inline]
    pub(crate) fn inv_bound(&self, idx: usize) -> f64 {
        self.inv_bounds[idx]
    }

    /// `φ(x)` for factor `idx`, checked against `[0, M_φ]`.
    #[inline]
    pub fn eval_factor(&self, idx: usize, x: &[f64]) -> Result<f64> {
        let factor = &self.factors[idx];
        let value = factor.kind.value(&factor.scope, x);
        let slack = BOUND_SLACK * (1.0 + factor.bound);
        if value >= -slack && value <= factor.bound + slack {
            Ok(value)
        } else {
            Err(Error::BoundViolation { factor: idx, value, bound: factor.bound })
        }
    }

    /// Total energy `U(x) = Σ_φ φ(x)`.
    pub fn energy(&self, x: &State) -> Result<f64> {
        (0..self.factors.len()).try_fold(0.0, |acc, f| Ok(acc + self.eval_factor(f, &x.0)?))
    }

    /// `Σ_{φ∈A[i]} φ(x)`.
    pub fn local_energy(&self, i: usize, x: &State) -> Result<f64> {
        self.local_energy_raw(i, &x.0)
    }

    #[inline]
    pub(crate) fn local_energy_raw(&self, i: usize, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for &f in &self.adjacency[i] {
            total += self.eval_factor(f, x)?;
        }
        Ok(total)
    }

    /// Serializable description of the graph; fails for custom factors.
    pub fn to_json(&self) -> Result<String> {
        let desc = GraphDescription {
            domain: self.domain,
            num_variables: self.num_variables(),
            factors: self.factors.clone(),
        };
        Ok(serde_json::to_string_pretty(&desc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let desc: GraphDescription = serde_json::from_str(text)?;
        FactorGraph::new(desc.domain, desc.num_variables, desc.factors)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphDescription {
    domain: Domain,
    num_variables: usize,
    factors: Vec<Factor>,
}

fn compute_stats(domain: Domain, factors: &[Factor], adjacency: &[Vec<usize>]) -> GraphStats {
    let local_bounds: Vec<f64> = adjacency
        .iter()
        .map(|adj| adj.iter().map(|&f| factors[f].bound).sum())
        .collect();
    GraphStats {
        local_max_energy: local_bounds.iter().copied().fold(0.0, f64::max),
        max_degree: adjacency.iter().map(Vec::len).max().unwrap_or(0),
        total_max_energy: factors.iter().map(|f| f.bound).sum(),
        local_bounds,
        domain,
    }
}
