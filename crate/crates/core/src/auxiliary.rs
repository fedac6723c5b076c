//! Poisson auxiliary variables.
//!
//! Each factor carries a count `s_φ | x ~ Poisson(λM_φ/L + φ(x))`. The counts
//! for the factors adjacent to one variable are drawn by sampling the
//! aggregate `B ~ Poisson(Λ_i)`, `Λ_i = Σ_{φ∈A[i]} (λM_φ/L + M_φ)`, routing
//! each of the `B` events to a factor through an alias table, and thinning it
//! with probability `(λM_φ/L + φ(x)) / (λM_φ/L + M_φ)`.

use log::warn;
use rand::Rng;

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, State};
use crate::poisson::Poisson;

/// Minibatch size parameter `λ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinibatchConfig {
    pub lambda: f64,
}

impl MinibatchConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(MinibatchConfig { lambda })
    }

    /// `λ = multiplier · L²`.
    pub fn from_multiplier(multiplier: f64, local_max_energy: f64) -> Result<Self> {
        MinibatchConfig::new(multiplier * local_max_energy * local_max_energy)
    }
}

/// Sparse nonzero counts `φ → s_φ`. Entries keep first-insertion order.
#[derive(Clone, Debug, Default)]
pub struct AuxAssignment {
    entries: Vec<(usize, u32)>,
    slot: Vec<u32>,
    /// `φ(x)` per factor for the draw in progress; NaN when not yet evaluated.
    memo: Vec<f64>,
    memo_touched: Vec<usize>,
}

const EMPTY_SLOT: u32 = u32::MAX;

impl AuxAssignment {
    pub fn new(num_factors: usize) -> Self {
        AuxAssignment {
            entries: Vec::new(),
            slot: vec![EMPTY_SLOT; num_factors],
            memo: vec![f64::NAN; num_factors],
            memo_touched: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        for &(f, _) in &self.entries {
            self.slot[f] = EMPTY_SLOT;
        }
        self.entries.clear();
        for &f in &self.memo_touched {
            self.memo[f] = f64::NAN;
        }
        self.memo_touched.clear();
    }

    /// `φ_f(x)`, evaluated on first use within the current draw. The flag
    /// reports whether an evaluation happened.
    #[inline]
    fn factor_value(&mut self, g: &FactorGraph, f: usize, x: &[f64]) -> Result<(f64, bool)> {
        if f >= self.memo.len() {
            self.memo.resize(f + 1, f64::NAN);
        }
        let cached = self.memo[f];
        if !cached.is_nan() {
            return Ok((cached, false));
        }
        let value = g.eval_factor(f, x)?;
        self.memo[f] = value;
        self.memo_touched.push(f);
        Ok((value, true))
    }

    #[inline]
    pub fn increment(&mut self, factor: usize) {
        if factor >= self.slot.len() {
            self.slot.resize(factor + 1, EMPTY_SLOT);
        }
        match self.slot[factor] {
            EMPTY_SLOT => {
                self.slot[factor] = self.entries.len() as u32;
                self.entries.push((factor, 1));
            }
            pos => self.entries[pos as usize].1 += 1,
        }
    }

    pub fn get(&self, factor: usize) -> u32 {
        match self.slot.get(factor) {
            Some(&pos) if pos != EMPTY_SLOT => self.entries[pos as usize].1,
            _ => 0,
        }
    }

    /// `(factor, count)` pairs, all counts ≥ 1.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entries.iter().copied()
    }

    /// `|S|`, the number of factors with a nonzero count.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ_φ s_φ`.
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }
}

/// Precomputed sampler for the counts of one factor set.
#[derive(Clone, Debug)]
pub struct AuxTable {
    factors: Vec<usize>,
    base_rates: Vec<f64>,
    upper_rates: Vec<f64>,
    total_rate: f64,
    events: Poisson,
    router: Option<AliasTable>,
}

impl AuxTable {
    fn build(g: &FactorGraph, cfg: MinibatchConfig, factor_set: &[usize]) -> Result<Self> {
        let local_max = g.stats().local_max_energy;
        let mut factors = Vec::with_capacity(factor_set.len());
        let mut base_rates = Vec::with_capacity(factor_set.len());
        let mut upper_rates = Vec::with_capacity(factor_set.len());
        for &f in factor_set {
            let bound = g.factor(f).bound;
            // M_φ = 0 forces s_φ = 0.
            if bound > 0.0 {
                let base = cfg.lambda * bound / local_max;
                factors.push(f);
                base_rates.push(base);
                upper_rates.push(base + bound);
            }
        }
        let total_rate: f64 = upper_rates.iter().sum();
        let router = if factors.is_empty() { None } else { Some(AliasTable::new(&upper_rates)?) };
        Ok(AuxTable { factors, base_rates, upper_rates, total_rate, events: Poisson::new(total_rate)?, router })
    }

    /// `Λ`, the expected number of routed events per draw.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Factors covered by the table (those with `M_φ > 0`).
    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    /// `ρ(φ)` for the `pos`-th covered factor.
    pub fn routing_probability(&self, pos: usize) -> f64 {
        self.upper_rates[pos] / self.total_rate
    }

    /// Draws the counts for the current state into `out` (cleared first).
    /// Returns the number of factor evaluations performed. `x` is fixed for
    /// the whole draw, so each factor is evaluated at most once however many
    /// of the `B` routed events land on it.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        g: &FactorGraph,
        x: &[f64],
        rng: &mut R,
        out: &mut AuxAssignment,
    ) -> Result<u64> {
        out.clear();
        let Some(router) = &self.router else {
            return Ok(0);
        };
        let events = self.events.sample(rng);
        let mut evals = 0;
        for _ in 0..events {
            let pos = router.sample(rng);
            let f = self.factors[pos];
            let (value, fresh) = out.factor_value(g, f, x)?;
            evals += fresh as u64;
            let keep = (self.base_rates[pos] + value) / self.upper_rates[pos];
            if rng.random::<f64>() < keep {
                out.increment(f);
            }
        }
        Ok(evals)
    }
}

/// Per-variable tables over `A[i]`.
#[derive(Clone, Debug)]
pub struct AuxTables {
    config: MinibatchConfig,
    per_variable: Vec<AuxTable>,
}

impl AuxTables {
    pub fn config(&self) -> MinibatchConfig {
        self.config
    }

    pub fn variable(&self, i: usize) -> &AuxTable {
        &self.per_variable[i]
    }

    pub fn len(&self) -> usize {
        self.per_variable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_variable.is_empty()
    }
}

fn check_lambda(g: &FactorGraph, cfg: MinibatchConfig) -> Result<f64> {
    let local_max = g.stats().local_max_energy;
    if local_max <= 0.0 {
        return Err(Error::DegenerateModel);
    }
    if cfg.lambda < 2.0 * local_max {
        warn!(
            "lambda = {} is below 2L = {}; spectral-gap guarantees do not apply",
            cfg.lambda,
            2.0 * local_max
        );
    }
    Ok(local_max)
}

/// Builds the per-variable routing tables. Fails when `L = 0`.
pub fn build_aux_tables(g: &FactorGraph, cfg: MinibatchConfig) -> Result<AuxTables> {
    check_lambda(g, cfg)?;
    let per_variable = (0..g.num_variables())
        .map(|i| AuxTable::build(g, cfg, g.adjacent(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AuxTables { config: cfg, per_variable })
}

/// One table over every factor of the graph, for graph-wide minibatches.
/// Its rate is `Σ_φ (λM_φ/L + M_φ) = λΨ/L + Ψ`.
pub fn build_global_table(g: &FactorGraph, cfg: MinibatchConfig) -> Result<AuxTable> {
    check_lambda(g, cfg)?;
    let all: Vec<usize> = (0..g.num_factors()).collect();
    AuxTable::build(g, cfg, &all)
}

/// Draws `s_φ` for every `φ ∈ A[i]` at state `x`.
pub fn sample_aux<R: Rng + ?Sized>(
    g: &FactorGraph,
    tables: &AuxTables,
    i: usize,
    x: &State,
    rng: &mut R,
) -> Result<AuxAssignment> {
    let mut out = AuxAssignment::new(g.num_factors());
    tables.variable(i).sample_into(g, &x.0, rng, &mut out)?;
    Ok(out)
}

/// `Σ_{φ∈S} s_φ · log(1 + L/(λM_φ) · φ(x))` at the state as given.
#[inline]
pub fn minibatch_energy_at(g: &FactorGraph, cfg: MinibatchConfig, x: &[f64], s: &AuxAssignment) -> Result<f64> {
    let scale = g.stats().local_max_energy / cfg.lambda;
    let mut total = 0.0;
    for (f, count) in s.iter() {
        let value = g.eval_factor(f, x)?;
        let arg = scale * g.inv_bound(f) * value;
        debug_assert!(arg > -1.0);
        total += count as f64 * arg.ln_1p();
    }
    Ok(total)
}

/// Minibatch energy with variable `i` set to `v`; `x` is restored before returning.
pub fn minibatch_energy(
    g: &FactorGraph,
    cfg: MinibatchConfig,
    i: usize,
    v: f64,
    x: &mut State,
    s: &AuxAssignment,
) -> Result<f64> {
    let saved = x.0[i];
    x.0[i] = v;
    let result = minibatch_energy_at(g, cfg, &x.0, s);
    x.0[i] = saved;
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::{Domain, Factor, FactorKind};
    use crate::poisson::pmf;
    use crate::rng::chain_rng;

    fn one_factor(bound: f64, value: f64) -> FactorGraph {
        FactorGraph::new(
            Domain::continuous(0.0, 1.0).unwrap(),
            1,
            vec![Factor::custom(vec![0], bound, move |_| value)],
        )
        .unwrap()
    }

    #[test]
    fn single_factor_table() {
        let g = one_factor(1.0, 0.5);
        let l = g.stats().local_max_energy;
        let tables = build_aux_tables(&g, MinibatchConfig::new(2.0 * l).unwrap()).unwrap();
        let t = tables.variable(0);
        assert!((t.total_rate() - 3.0 * l).abs() < 1e-15);
        assert_eq!(t.routing_probability(0), 1.0);
    }

    #[test]
    fn equal_bounds_route_uniformly() {
        let g = FactorGraph::new(
            Domain::discrete(2).unwrap(),
            2,
            vec![
                Factor::new(FactorKind::PottsPair { weight: 1.0 }, vec![0, 1], 1.0),
                Factor::new(FactorKind::Table { values: vec![0.0, 1.0] }, vec![0], 1.0),
            ],
        )
        .unwrap();
        let tables = build_aux_tables(&g, MinibatchConfig::new(4.0).unwrap()).unwrap();
        let t = tables.variable(0);
        assert_eq!(t.routing_probability(0), 0.5);
        assert_eq!(t.routing_probability(1), 0.5);
    }

    #[test]
    fn degenerate_model_is_rejected() {
        let g = FactorGraph::new(Domain::discrete(2).unwrap(), 2, vec![]).unwrap();
        assert!(matches!(
            build_aux_tables(&g, MinibatchConfig::new(1.0).unwrap()),
            Err(Error::DegenerateModel)
        ));
        assert!(MinibatchConfig::new(0.0).is_err());
    }

    #[test]
    fn saturated_factors_keep_every_event() {
        // φ(x) = M_φ makes the thinning probability exactly 1.
        let g = one_factor(1.0, 1.0);
        let tables = build_aux_tables(&g, MinibatchConfig::new(3.0).unwrap()).unwrap();
        let mut rng = chain_rng(2, 0);
        let mut out = AuxAssignment::new(1);
        let x = [0.3];
        let draws = 10_000;
        let mut total = 0u64;
        for _ in 0..draws {
            let evals = tables.variable(0).sample_into(&g, &x, &mut rng, &mut out).unwrap();
            // one factor: evaluated once iff any event was routed to it
            assert_eq!(evals, u64::from(out.total() > 0));
            total += out.total();
        }
        // every event kept: s ~ Poisson(λ + M) = Poisson(4)
        let mean = total as f64 / draws as f64;
        assert!((mean - 4.0).abs() < 4.0 * (4.0 / draws as f64).sqrt());
    }

    #[test]
    fn zero_probability_matches_poisson_pmf() {
        // s ~ Poisson(λM/L + φ(x)) = Poisson(2.5).
        let g = one_factor(1.0, 0.5);
        let tables = build_aux_tables(&g, MinibatchConfig::new(2.0).unwrap()).unwrap();
        let mut rng = chain_rng(9, 0);
        let mut out = AuxAssignment::new(1);
        let draws = 1_000_000;
        let mut zeros = 0usize;
        for _ in 0..draws {
            tables.variable(0).sample_into(&g, &[0.0], &mut rng, &mut out).unwrap();
            if out.get(0) == 0 {
                zeros += 1;
            }
        }
        let p0 = pmf(2.5, 0);
        let sigma = (p0 * (1.0 - p0) / draws as f64).sqrt();
        assert!((p0 - 0.0821).abs() < 1e-4);
        assert!((zeros as f64 / draws as f64 - p0).abs() < 3.0 * sigma);
    }

    #[test]
    fn minibatch_energy_hand_value() {
        // s = 2, φ = M = L, λ = 2L → 2·log(1.5).
        let g = one_factor(1.0, 1.0);
        let mut s = AuxAssignment::new(1);
        s.increment(0);
        s.increment(0);
        let mut x = State::new(vec![0.2]);
        let u = minibatch_energy(&g, MinibatchConfig::new(2.0).unwrap(), 0, 0.7, &mut x, &s).unwrap();
        let direct = 2.0 * (1.0f64 + 1.0 / 2.0).ln();
        assert!((u - direct).abs() < 1e-15);
        assert!((u - 0.8109).abs() < 1e-4);
        assert_eq!(x.0[0], 0.2);
    }

    #[test]
    fn empty_assignment_gives_zero_energy() {
        let g = one_factor(1.0, 0.5);
        let s = AuxAssignment::new(1);
        let mut x = State::new(vec![0.2]);
        for v in [0.0, 0.5, 1.0] {
            assert_eq!(minibatch_energy(&g, MinibatchConfig::new(1.0).unwrap(), 0, v, &mut x, &s).unwrap(), 0.0);
        }
    }

    #[test]
    fn assignment_bookkeeping() {
        let mut s = AuxAssignment::new(4);
        s.increment(2);
        s.increment(0);
        s.increment(2);
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(2), 2);
        assert_eq!(s.get(1), 0);
        assert_eq!(s.total(), 3);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![(2, 2), (0, 1)]);
        s.clear();
        assert!(s.is_empty());
        assert_eq!(s.get(2), 0);
    }
}
