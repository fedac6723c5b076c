use proptest::prelude::*;
use serde_json::{json, Map};

use poisson_gibbs::auxiliary::{build_aux_tables, AuxAssignment, MinibatchConfig};
use poisson_gibbs::cheb::{default_floor, ChebPoly, NormalizedCdf};
use poisson_gibbs::continuous::Envelope;
use poisson_gibbs::diagnostics::{
    detailed_balance_residual, exact_gibbs_kernel, exact_mh_kernel, spectral_gap, stationarity_residual,
};
use poisson_gibbs::experiment::merge_config;
use poisson_gibbs::factor_graph::{Domain, Factor, FactorGraph, FactorKind, State};
use poisson_gibbs::mh::ProposalKernel;
use poisson_gibbs::models::build_toy;
use poisson_gibbs::poisson::pmf;
use poisson_gibbs::rng::chain_rng;
use poisson_gibbs::sampler::{Sampler, SamplerKind, SamplerSettings, Scan};

/// Discrete graph on `n` variables with `labels` labels: Potts pairs on every
/// pair plus a table factor per variable.
fn discrete_graph() -> impl Strategy<Value = FactorGraph> {
    (2usize..=3, 2usize..=3).prop_flat_map(|(n, d)| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(0.0f64..2.0, pairs),
            proptest::collection::vec(proptest::collection::vec(0.0f64..1.5, d), n),
        )
            .prop_map(move |(weights, tables)| {
                let mut factors = Vec::new();
                let mut w = weights.into_iter();
                for a in 0..n {
                    for b in (a + 1)..n {
                        let weight = w.next().unwrap();
                        factors.push(Factor::new(FactorKind::PottsPair { weight }, vec![a, b], weight));
                    }
                }
                for (i, values) in tables.into_iter().enumerate() {
                    let bound = values.iter().copied().fold(0.0, f64::max);
                    factors.push(Factor::new(FactorKind::Table { values }, vec![i], bound));
                }
                FactorGraph::new(Domain::discrete(d).unwrap(), n, factors).unwrap()
            })
    })
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|j| f(a + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_gibbs_kernel_is_stochastic_reversible_and_psd(g in discrete_graph()) {
        let t = exact_gibbs_kernel(&g).unwrap();
        let pi = poisson_gibbs::diagnostics::exact_distribution(&g).unwrap();
        for row in t.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        prop_assert!(detailed_balance_residual(&t, &pi) < 1e-12);
        prop_assert!(stationarity_residual(&t, &pi) < 1e-12);
        let gap = spectral_gap(&t, &pi, 1e-9).unwrap().gap;
        prop_assert!(gap > 0.0 && gap <= 1.0 + 1e-12);
    }

    #[test]
    fn exact_mh_kernel_is_stochastic_and_reversible(g in discrete_graph()) {
        for proposal in [ProposalKernel::UniformJoint, ProposalKernel::SingleSite] {
            let t = exact_mh_kernel(&g, &proposal).unwrap();
            let pi = poisson_gibbs::diagnostics::exact_distribution(&g).unwrap();
            for row in t.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
            prop_assert!(detailed_balance_residual(&t, &pi) < 1e-12);
            prop_assert!(stationarity_residual(&t, &pi) < 1e-12);
        }
    }

    #[test]
    fn aux_counts_stay_on_adjacent_factors(g in discrete_graph(), mult in 0.5f64..20.0, seed in 0u64..1000) {
        let l = g.stats().local_max_energy;
        prop_assume!(l > 0.0);
        let tables = build_aux_tables(&g, MinibatchConfig::new(mult * l * l).unwrap()).unwrap();
        let mut rng = chain_rng(seed, 0);
        let mut out = AuxAssignment::new(g.num_factors());
        for _ in 0..20 {
            let i = rand::Rng::random_range(&mut rng, 0..g.num_variables());
            let x = State::random(&g, &mut rng);
            let evals = tables.variable(i).sample_into(&g, x.values(), &mut rng, &mut out).unwrap();
            prop_assert!(evals as usize <= g.adjacent(i).len());
            prop_assert!(out.len() as u64 <= evals);
            for (f, s) in out.iter() {
                prop_assert!(s > 0);
                prop_assert!(g.adjacent(i).contains(&f));
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials(
        coeffs in proptest::collection::vec(-2.0f64..2.0, 1..12),
        extra in 0usize..6,
        a in -5.0f64..5.0,
        width in 0.1f64..10.0,
    ) {
        let b = a + width;
        let p = ChebPoly::new(coeffs.clone(), a, b).unwrap();
        let q = ChebPoly::interpolate(|v| p.eval(v), coeffs.len() - 1 + extra, a, b).unwrap();
        let scale: f64 = coeffs.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        for j in 0..=50 {
            let v = a + width * j as f64 / 50.0;
            prop_assert!((p.eval(v) - q.eval(v)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn antiderivative_integrates(coeffs in proptest::collection::vec(-2.0f64..2.0, 1..10), a in -3.0f64..3.0, width in 0.1f64..4.0) {
        let b = a + width;
        let p = ChebPoly::new(coeffs.clone(), a, b).unwrap();
        let big = p.antiderivative();
        let exact = big.eval(b) - big.eval(a);
        let quad = simpson(|v| p.eval(v), a, b, 2000);
        let scale: f64 = coeffs.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        prop_assert!((exact - quad).abs() <= 1e-9 * scale * width);
    }

    #[test]
    fn cdf_is_monotone_and_inverts(coeffs in proptest::collection::vec(-1.0f64..1.0, 1..10), lift in -0.5f64..2.0) {
        let mut coeffs = coeffs;
        coeffs[0] += lift;
        let p = ChebPoly::new(coeffs, -1.0, 1.0).unwrap();
        let floor = default_floor(&p).max(1e-6);
        let cdf = NormalizedCdf::new(&p, floor).unwrap();
        prop_assert!(cdf.cdf(-1.0).abs() < 1e-12);
        prop_assert!((cdf.cdf(1.0) - 1.0).abs() < 1e-12);
        let mut prev = 0.0;
        for j in 0..=400 {
            let v = -1.0 + 2.0 * j as f64 / 400.0;
            let c = cdf.cdf(v);
            prop_assert!(c >= prev - 1e-12);
            prop_assert!(cdf.density(v) > 0.0);
            prev = c;
        }
        for j in 1..100 {
            let u = j as f64 / 100.0;
            let v = cdf.invert(u);
            prop_assert!((-1.0..=1.0).contains(&v));
            prop_assert!((cdf.cdf(v) - u).abs() < 1e-9);
        }
    }

    #[test]
    fn poisson_pmf_sums_to_one(mean in 0.0f64..200.0) {
        let total: f64 = (0..2000).map(|k| pmf(mean, k)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flags_override_config_file(file_iters in 1u64..1_000_000, flag_iters in 1u64..1_000_000) {
        let mut base = Map::new();
        base.insert("iters".into(), json!(file_iters));
        base.insert("sampler".into(), json!("gibbs"));
        let mut flags = Map::new();
        flags.insert("iters".into(), json!(flag_iters));
        let raw = merge_config(base, flags).unwrap();
        prop_assert_eq!(raw.iters, Some(flag_iters));
        prop_assert_eq!(raw.sampler.as_deref(), Some("gibbs"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chains_are_seed_deterministic_and_stay_in_domain(
        kind_idx in 0usize..SamplerKind::ALL.len(),
        seed in 0u64..10_000,
        systematic in any::<bool>(),
    ) {
        let kind = SamplerKind::ALL[kind_idx];
        let continuous = !matches!(kind, SamplerKind::Gibbs | SamplerKind::PoissonGibbs);
        let g = build_toy(if continuous { "spin2" } else { "ising2x2" }).unwrap();
        let proposal = if continuous { ProposalKernel::Gaussian { scale: 0.3 } } else { ProposalKernel::SingleSite };
        let settings = SamplerSettings {
            kind,
            lambda: 4.0,
            m: 5,
            k: 8,
            envelope: Envelope::LocalBound,
            max_trials: 10_000,
            proposal,
        };
        let scan = if systematic && !matches!(kind, SamplerKind::Mh | SamplerKind::PoissonMh) {
            Scan::Systematic
        } else {
            Scan::Random
        };
        let run = || {
            let mut sampler = Sampler::new(&g, settings).unwrap().with_scan(scan).unwrap();
            let mut rng = chain_rng(seed, 3);
            let mut x = State::random(&g, &mut rng);
            let mut trace = Vec::new();
            for _ in 0..200 {
                sampler.step(&mut x, &mut rng).unwrap();
                x.validate(&g).unwrap();
                trace.extend_from_slice(x.values());
            }
            trace
        };
        let first = run();
        prop_assert_eq!(first.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), run().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
