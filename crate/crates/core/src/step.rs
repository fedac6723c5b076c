use rand::Rng;
use serde::Serialize;

/// Per-iteration accounting returned by every sampler step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepReport {
    /// Variable that was resampled (the first changed one for joint proposals).
    pub variable: usize,
    /// `|S|`, factors with a nonzero auxiliary count; 0 for full-batch samplers.
    pub minibatch_size: usize,
    /// Factor evaluations performed, including auxiliary sampling.
    pub factor_evals: u64,
    /// Whether the state moved to the proposed value. Always true for exact
    /// Gibbs updates.
    pub accepted: bool,
    /// `min(1, p)` for Metropolis–Hastings corrected steps, 1 otherwise.
    pub accept_prob: f64,
    /// Proposals drawn (rejection sampling); 1 otherwise.
    pub trials: u64,
}

impl StepReport {
    pub(crate) fn exact(variable: usize, minibatch_size: usize, factor_evals: u64) -> Self {
        StepReport { variable, minibatch_size, factor_evals, accepted: true, accept_prob: 1.0, trials: 1 }
    }
}

/// Samples an index from `softmax(energies)`, subtracting the maximum first.
pub fn sample_softmax<R: Rng + ?Sized>(energies: &[f64], rng: &mut R) -> usize {
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights = [0.0f64; 64];
    let mut heap;
    let w: &mut [f64] = if energies.len() <= weights.len() {
        &mut weights[..energies.len()]
    } else {
        heap = vec![0.0; energies.len()];
        &mut heap
    };
    let mut total = 0.0;
    for (wi, &u) in w.iter_mut().zip(energies) {
        *wi = (u - max).exp();
        total += *wi;
    }
    let mut target = rng.random::<f64>() * total;
    for (idx, &wi) in w.iter().enumerate() {
        if target < wi {
            return idx;
        }
        target -= wi;
    }
    // Rounding left `target` marginally above the last weight.
    w.iter().rposition(|&wi| wi > 0.0).unwrap_or(0)
}

/// Normalized `softmax(energies)`.
pub fn softmax(energies: &[f64]) -> Vec<f64> {
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = energies.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|wi| wi / total).collect()
}
