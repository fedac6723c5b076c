//! Builders for the benchmark factor graphs and small oracle-friendly toys.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::{log_half_mixture, Domain, Factor, FactorGraph, FactorKind};
use crate::rng::chain_rng;

/// Pairwise interaction strength on a square lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `A_ij = scale · exp(−d²/(2·bandwidth²))`, pairs below `min_weight` dropped.
    Gaussian { bandwidth: f64, scale: f64, min_weight: f64 },
    /// `A_ij = weight` for lattice neighbours at distance 1, else 0.
    NearestNeighbor { weight: f64 },
}

impl Kernel {
    pub fn gaussian(bandwidth: f64, scale: f64) -> Self {
        Kernel::Gaussian { bandwidth, scale, min_weight: 0.0 }
    }

    fn weight(&self, dist_sq: f64) -> f64 {
        match *self {
            Kernel::Gaussian { bandwidth, scale, min_weight } => {
                let w = scale * (-dist_sq / (2.0 * bandwidth * bandwidth)).exp();
                if w >= min_weight {
                    w
                } else {
                    0.0
                }
            }
            Kernel::NearestNeighbor { weight } => {
                if dist_sq == 1.0 {
                    weight
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Kernel::Gaussian { bandwidth, scale, min_weight } => {
                bandwidth > 0.0 && scale >= 0.0 && min_weight >= 0.0 && bandwidth.is_finite() && scale.is_finite()
            }
            Kernel::NearestNeighbor { weight } => weight >= 0.0 && weight.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid kernel {self:?}")))
        }
    }
}

/// Nonzero weights `(i, j, A_ij)`, `i < j`, on a `side × side` lattice in
/// row-major order.
pub fn lattice_weights(side: usize, kernel: Kernel) -> Result<Vec<(usize, usize, f64)>> {
    kernel.validate()?;
    let n = side * side;
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (ri, ci) = ((i / side) as f64, (i % side) as f64);
            let (rj, cj) = ((j / side) as f64, (j % side) as f64);
            let w = kernel.weight((ri - rj).powi(2) + (ci - cj).powi(2));
            if w > 0.0 {
                out.push((i, j, w));
            }
        }
    }
    Ok(out)
}

fn check_weights(n: usize, weights: &[(usize, usize, f64)]) -> Result<()> {
    for &(i, j, w) in weights {
        if i == j || i >= n || j >= n {
            return Err(Error::InvalidModel(format!("bad weight index pair ({i}, {j}) for {n} variables")));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidModel(format!("weight A[{i}][{j}] = {w} must be finite and >= 0")));
        }
    }
    Ok(())
}

/// Potts model `U = Σ_{i<j} β·A_ij·δ(x_i, x_j)` with one factor per pair.
pub fn potts_from_weights(n: usize, labels: usize, beta: f64, weights: &[(usize, usize, f64)]) -> Result<FactorGraph> {
    if labels < 2 || !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("need labels >= 2 and beta > 0, got {labels}, {beta}")));
    }
    check_weights(n, weights)?;
    let factors = weights
        .iter()
        .map(|&(i, j, a)| Factor::new(FactorKind::PottsPair { weight: beta * a }, vec![i, j], beta * a))
        .collect();
    FactorGraph::new(Domain::discrete(labels)?, n, factors)
}

/// Fully connected Potts model on a `side × side` lattice.
pub fn build_potts(side: usize, labels: usize, beta: f64, kernel: Kernel) -> Result<FactorGraph> {
    if side < 2 {
        return Err(Error::InvalidParameter(format!("lattice side must be >= 2, got {side}")));
    }
    potts_from_weights(side * side, labels, beta, &lattice_weights(side, kernel)?)
}

/// Continuous spins on `[0, 1]` with `U = Σ β·A_ij·(x_i x_j + 1)`, `M_φ = 2β·A_ij`.
pub fn build_continuous_spin(n: usize, beta: f64, weights: &[(usize, usize, f64)]) -> Result<FactorGraph> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    check_weights(n, weights)?;
    let factors = weights
        .iter()
        .map(|&(i, j, a)| Factor::new(FactorKind::SpinPair { weight: beta * a }, vec![i, j], 2.0 * beta * a))
        .collect();
    FactorGraph::new(Domain::continuous(0.0, 1.0)?, n, factors)
}

/// Parameters of the truncated tied-mean Gaussian mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    /// Prior variances of `x₁` and `x₂`.
    pub prior_variances: [f64; 2],
    pub obs_variance: f64,
    /// Both variables live in `[−bound, bound]`.
    pub bound: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        GmmParams { prior_variances: [10.0, 1.0], obs_variance: 2.0, bound: 6.0 }
    }
}

/// Draws `y ~ ½N(x₁, σ²) + ½N(x₁ + x₂, σ²)` at the given truth.
pub fn generate_gmm_observations(n: usize, truth: [f64; 2], obs_variance: f64, seed: u64) -> Result<Vec<f64>> {
    let noise = Normal::new(0.0, obs_variance.sqrt())
        .map_err(|e| Error::InvalidParameter(format!("observation variance: {e}")))?;
    let mut rng = chain_rng(seed, 0);
    Ok((0..n)
        .map(|_| {
            let mean = if rng.random::<bool>() { truth[0] } else { truth[0] + truth[1] };
            mean + noise.sample(&mut rng)
        })
        .collect())
}

/// Scan-then-golden-section search for the extremum of `f` on `[a, b]`.
fn extremize_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, maximize: bool) -> f64 {
    const SCAN: usize = 256;
    let sign = if maximize { -1.0 } else { 1.0 };
    let g = |t: f64| sign * f(t);
    let step = (b - a) / SCAN as f64;
    let (best, best_val) = (0..=SCAN)
        .map(|j| (j, g(a + j as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (j, v)| if v < acc.1 { (j, v) } else { acc });
    let (mut lo, mut hi) = (a + best.saturating_sub(1) as f64 * step, (a + (best + 1) as f64 * step).min(b));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..60 {
        if gc < gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - ratio * (hi - lo);
            gc = g(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + ratio * (hi - lo);
            gd = g(d);
        }
    }
    sign * best_val.min(gc).min(gd).min(g(a)).min(g(b))
}

/// `(inf, sup)` of the unshifted mixture log-likelihood over the box.
///
/// At fixed `x₁` the likelihood is unimodal in `x₂` with its peak at
/// `x₂ = y − x₁`, so the infimum lies on `x₂ = ±bound` and the supremum on
/// `x₂ = clamp(y − x₁)`.
pub fn likelihood_range(y: f64, obs_variance: f64, bound: f64) -> (f64, f64) {
    let s = 2.0 * obs_variance;
    let raw = |x1: f64, x2: f64| {
        let da = y - x1;
        let db = y - x1 - x2;
        log_half_mixture(da * da / s, db * db / s)
    };
    let inf = extremize_1d(|x1| raw(x1, bound).min(raw(x1, -bound)), -bound, bound, false);
    let sup = extremize_1d(|x1| raw(x1, (y - x1).clamp(-bound, bound)), -bound, bound, true);
    (inf, sup)
}

/// Relative slack added to the likelihood shift and bound.
const GMM_MARGIN: f64 = 0.01;

/// Truncated mixture posterior over `(x₁, x₂) ∈ [−bound, bound]²`: two
/// shifted log-priors and one shifted log-likelihood factor per observation.
pub fn build_truncated_gmm(observations: &[f64], params: GmmParams) -> Result<FactorGraph> {
    let GmmParams { prior_variances, obs_variance, bound } = params;
    if !(bound > 0.0 && obs_variance > 0.0 && prior_variances.iter().all(|v| *v > 0.0)) {
        return Err(Error::InvalidParameter(format!("invalid mixture parameters {params:?}")));
    }
    let mut factors = Vec::with_capacity(observations.len() + 2);
    for (var, &variance) in prior_variances.iter().enumerate() {
        let shift = bound * bound / (2.0 * variance);
        factors.push(Factor::new(FactorKind::GaussianPrior { variance, shift }, vec![var], shift));
    }
    for &y in observations {
        if !y.is_finite() {
            return Err(Error::InvalidModel(format!("non-finite observation {y}")));
        }
        let (inf, sup) = likelihood_range(y, obs_variance, bound);
        let range = sup - inf;
        // half the margin lifts φ off zero, the other half covers the top
        let shift = -inf + 0.5 * GMM_MARGIN * range;
        let kind = FactorKind::TiedMixtureLikelihood { y, variance: obs_variance, shift };
        factors.push(Factor::new(kind, vec![0, 1], (1.0 + GMM_MARGIN) * range));
    }
    FactorGraph::new(Domain::continuous(-bound, bound)?, 2, factors)
}

/// Named tiny instances: `ising2x2`, `uniform1`, `chain8`, `spin2`.
pub fn build_toy(name: &str) -> Result<FactorGraph> {
    match name {
        "ising2x2" => build_potts(2, 2, 1.0, Kernel::NearestNeighbor { weight: 1.0 }),
        "uniform1" => FactorGraph::new(Domain::discrete(2)?, 1, vec![]),
        "chain8" => {
            let tables: [(&[f64], f64); 3] = [
                (&[0.0, 0.3, 0.9, 1.0, 0.6, 0.2, 0.1, 0.4], 1.0),
                (&[0.8, 0.1, 0.0, 0.5, 1.0, 0.7, 0.3, 0.2], 1.0),
                (&[0.5, 0.0, 0.25, 0.1, 0.4, 0.5, 0.05, 0.3], 0.5),
            ];
            let factors = tables
                .iter()
                .map(|(values, bound)| Factor::new(FactorKind::Table { values: values.to_vec() }, vec![0], *bound))
                .collect();
            FactorGraph::new(Domain::discrete(8)?, 1, factors)
        }
        "spin2" => build_continuous_spin(2, 1.0, &[(0, 1, 1.0)]),
        other => Err(Error::UnknownModel(format!("toy:{other}"))),
    }
}

/// Serializable model description consumed by the command-line runner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Potts {
        side: usize,
        labels: usize,
        beta: f64,
        kernel: Kernel,
        /// Rescales the kernel so that `L` equals this value.
        #[serde(default)]
        target_local_max: Option<f64>,
    },
    ContinuousSpin {
        side: usize,
        beta: f64,
        kernel: Kernel,
        #[serde(default)]
        target_local_max: Option<f64>,
    },
    Gmm {
        observations: usize,
        truth: [f64; 2],
        seed: u64,
        params: GmmParams,
    },
    Toy {
        name: String,
    },
}

/// Sampler settings that suit a model, used when the caller gives none.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SamplerHints {
    /// `λ` as a multiple of `L²`.
    pub lambda_mult: f64,
    pub m: usize,
    pub k: usize,
}

/// `L`, `λ` and `k` at which the full-size mixture experiment is specified.
pub const GMM_REFERENCE_LOCAL_MAX: f64 = 1581.14;
pub const GMM_REFERENCE_LAMBDA: f64 = 500.0;
pub const GMM_REFERENCE_K: usize = 25;

fn rescaled(weights: Vec<(usize, usize, f64)>, n: usize, factor_per_weight: f64, target: Option<f64>) -> Vec<(usize, usize, f64)> {
    let Some(target) = target else {
        return weights;
    };
    let mut local = vec![0.0; n];
    for &(i, j, w) in &weights {
        local[i] += factor_per_weight * w;
        local[j] += factor_per_weight * w;
    }
    let current = local.iter().copied().fold(0.0, f64::max);
    if current <= 0.0 {
        return weights;
    }
    let scale = target / current;
    weights.into_iter().map(|(i, j, w)| (i, j, w * scale)).collect()
}

impl ModelSpec {
    /// Presets: `potts`, `potts-full`, `spin`, `spin-full`, `spin2`, `gmm`,
    /// `gmm-full`, and `toy:<name>`.
    pub fn preset(name: &str) -> Result<ModelSpec> {
        let gauss = Kernel::gaussian(1.0, 1.0);
        Ok(match name {
            "potts" => ModelSpec::Potts { side: 6, labels: 4, beta: 0.5, kernel: gauss, target_local_max: None },
            "potts-full" => {
                ModelSpec::Potts { side: 20, labels: 10, beta: 4.6, kernel: gauss, target_local_max: Some(5.09) }
            }
            "spin" => ModelSpec::ContinuousSpin { side: 4, beta: 0.5, kernel: gauss, target_local_max: None },
            "spin-full" => {
                ModelSpec::ContinuousSpin { side: 20, beta: 1.0, kernel: gauss, target_local_max: Some(13.71) }
            }
            "spin2" => ModelSpec::Toy { name: "spin2".into() },
            "gmm" => ModelSpec::Gmm { observations: 1000, truth: [0.0, 1.0], seed: 2019, params: GmmParams::default() },
            "gmm-full" => {
                ModelSpec::Gmm { observations: 1_000_000, truth: [0.0, 1.0], seed: 2019, params: GmmParams::default() }
            }
            other => match other.strip_prefix("toy:") {
                Some(toy) => {
                    build_toy(toy)?;
                    ModelSpec::Toy { name: toy.to_string() }
                }
                None => return Err(Error::UnknownModel(other.to_string())),
            },
        })
    }

    pub fn build(&self) -> Result<FactorGraph> {
        match self {
            ModelSpec::Potts { side, labels, beta, kernel, target_local_max } => {
                if *side < 2 {
                    return Err(Error::InvalidParameter(format!("lattice side must be >= 2, got {side}")));
                }
                let n = side * side;
                let w = rescaled(lattice_weights(*side, *kernel)?, n, *beta, *target_local_max);
                potts_from_weights(n, *labels, *beta, &w)
            }
            ModelSpec::ContinuousSpin { side, beta, kernel, target_local_max } => {
                let n = side * side;
                let w = rescaled(lattice_weights(*side, *kernel)?, n, 2.0 * beta, *target_local_max);
                build_continuous_spin(n, *beta, &w)
            }
            ModelSpec::Gmm { observations, truth, seed, params } => {
                let ys = generate_gmm_observations(*observations, *truth, params.obs_variance, *seed)?;
                build_truncated_gmm(&ys, *params)
            }
            ModelSpec::Toy { name } => build_toy(name),
        }
    }

    /// Defaults for `λ`, `m`, `k`. The mixture keeps the reference ratio
    /// `λ/L` and grows `k` in proportion to `L`; spin lattices use `m = 3`,
    /// `k = 10`.
    pub fn hints(&self, local_max_energy: f64) -> SamplerHints {
        match self {
            ModelSpec::Gmm { .. } => {
                let lambda = GMM_REFERENCE_LAMBDA / GMM_REFERENCE_LOCAL_MAX * local_max_energy;
                let k = (GMM_REFERENCE_K as f64 * local_max_energy / GMM_REFERENCE_LOCAL_MAX).ceil() as usize;
                SamplerHints {
                    lambda_mult: lambda / (local_max_energy * local_max_energy),
                    m: 20,
                    k: k.max(GMM_REFERENCE_K),
                }
            }
            ModelSpec::ContinuousSpin { .. } => SamplerHints { lambda_mult: 1.0, m: 3, k: 10 },
            _ => SamplerHints { lambda_mult: 1.0, m: 16, k: 64 },
        }
    }
}
