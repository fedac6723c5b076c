use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor_graph::State;
use crate::step::StepReport;

/// Additive smoothing applied to normalized histograms before KL.
pub const KL_EPSILON: f64 = 1e-9;

/// Exact per-run counters, optional per-step records and discrete marginal
/// counts.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ChainReport {
    pub steps: u64,
    pub factor_evals: u64,
    pub minibatch_total: u64,
    pub accepted: u64,
    pub accept_prob_total: f64,
    pub trials: u64,
    #[serde(skip)]
    records: Option<Vec<StepReport>>,
    /// `counts[i][v]`: visits of variable `i` to label `v` after each step.
    #[serde(skip)]
    counts: Vec<Vec<u64>>,
}

impl ChainReport {
    /// `labels` enables marginal counting for discrete chains over `n` variables.
    pub fn new(n: usize, labels: Option<usize>, keep_records: bool) -> Self {
        ChainReport {
            records: keep_records.then(Vec::new),
            counts: labels.map(|d| vec![vec![0; d]; n]).unwrap_or_default(),
            ..Default::default()
        }
    }

    pub fn record(&mut self, step: &StepReport, x: &State) {
        self.steps += 1;
        self.factor_evals += step.factor_evals;
        self.minibatch_total += step.minibatch_size as u64;
        self.accepted += step.accepted as u64;
        self.accept_prob_total += step.accept_prob;
        self.trials += step.trials;
        if let Some(records) = &mut self.records {
            records.push(*step);
        }
        for (row, &v) in self.counts.iter_mut().zip(&x.0) {
            row[v as usize] += 1;
        }
    }

    pub fn records(&self) -> Option<&[StepReport]> {
        self.records.as_deref()
    }

    fn per_step(&self, total: f64) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            total / self.steps as f64
        }
    }

    pub fn mean_factor_evals(&self) -> f64 {
        self.per_step(self.factor_evals as f64)
    }

    pub fn mean_minibatch(&self) -> f64 {
        self.per_step(self.minibatch_total as f64)
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.per_step(self.accepted as f64)
    }

    /// Mean of `min(1, p)` over steps.
    pub fn mean_accept_prob(&self) -> f64 {
        self.per_step(self.accept_prob_total)
    }

    /// Empirical marginals `p̂_i`, one row per variable.
    pub fn marginals(&self) -> Result<Vec<Vec<f64>>> {
        if self.steps == 0 || self.counts.is_empty() {
            return Err(Error::EmptyReport);
        }
        Ok(self
            .counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / self.steps as f64).collect())
            .collect())
    }
}

/// Mean over variables of `‖p̂_i − Uniform(D)‖₂`.
pub fn marginal_error(report: &ChainReport, labels: usize) -> Result<f64> {
    let target = vec![vec![1.0 / labels as f64; labels]; report.counts.len()];
    marginal_error_against(report, &target)
}

/// Mean over variables of `‖p̂_i − target_i‖₂`.
pub fn marginal_error_against(report: &ChainReport, target: &[Vec<f64>]) -> Result<f64> {
    let marginals = report.marginals()?;
    if marginals.len() != target.len() {
        return Err(Error::BinMismatch(marginals.len(), target.len()));
    }
    let mut total = 0.0;
    for (p, q) in marginals.iter().zip(target) {
        if p.len() != q.len() {
            return Err(Error::BinMismatch(p.len(), q.len()));
        }
        total += p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    }
    Ok(total / marginals.len() as f64)
}

fn smoothed(weights: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("histogram needs finite nonnegative weights with positive mass".into()));
    }
    let raw: Vec<f64> = weights.iter().map(|w| w / total + KL_EPSILON).collect();
    let norm: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / norm).collect())
}

/// `KL(p‖q) + KL(q‖p)` after normalizing and ε-smoothing both histograms.
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::BinMismatch(p.len(), q.len()));
    }
    let (p, q) = (smoothed(p)?, smoothed(q)?);
    Ok(p.iter().zip(&q).map(|(a, b)| (a - b) * (a / b).ln()).sum())
}

/// Equal-width histogram on `[lower, upper]`; the top edge belongs to the last bin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram1d {
    pub lower: f64,
    pub upper: f64,
    counts: Vec<f64>,
}

impl Histogram1d {
    pub fn new(lower: f64, upper: f64, bins: usize) -> Self {
        assert!(bins > 0 && lower < upper);
        Histogram1d { lower, upper, counts: vec![0.0; bins] }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    fn bin(&self, v: f64) -> Option<usize> {
        if !(v >= self.lower && v <= self.upper) {
            return None;
        }
        let b = ((v - self.lower) / (self.upper - self.lower) * self.bins() as f64) as usize;
        Some(b.min(self.bins() - 1))
    }

    /// Adds `v`; values outside the range are ignored and reported as `false`.
    pub fn add(&mut self, v: f64) -> bool {
        match self.bin(v) {
            Some(b) => {
                self.counts[b] += 1.0;
                true
            }
            None => false,
        }
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Equal-width 2-D histogram, row-major in the first coordinate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram2d {
    pub x: Histogram1d,
    pub y: Histogram1d,
    counts: Vec<f64>,
}

impl Histogram2d {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), bins: usize) -> Self {
        Histogram2d {
            x: Histogram1d::new(x_range.0, x_range.1, bins),
            y: Histogram1d::new(y_range.0, y_range.1, bins),
            counts: vec![0.0; bins * bins],
        }
    }

    pub fn from_counts(x_range: (f64, f64), y_range: (f64, f64), bins: usize, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != bins * bins {
            return Err(Error::BinMismatch(counts.len(), bins * bins));
        }
        let mut h = Histogram2d::new(x_range, y_range, bins);
        h.counts = counts;
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.x.bins()
    }

    pub fn add(&mut self, a: f64, b: f64) -> bool {
        match (self.x.bin(a), self.y.bin(b)) {
            (Some(i), Some(j)) => {
                let n = self.bins();
                self.counts[i * n + j] += 1.0;
                true
            }
            _ => false,
        }
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.bins() + j]
    }

    /// Centre of bin `(i, j)`.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        let n = self.bins() as f64;
        let wx = (self.x.upper - self.x.lower) / n;
        let wy = (self.y.upper - self.y.lower) / n;
        (self.x.lower + (i as f64 + 0.5) * wx, self.y.lower + (j as f64 + 0.5) * wy)
    }

    /// Box-filter average over a `width × width` window, truncated at edges.
    pub fn box_smoothed(&self, width: usize) -> Histogram2d {
        let n = self.bins() as isize;
        let r = (width / 2) as isize;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                let (mut sum, mut cells) = (0.0, 0.0);
                for di in -r..=r {
                    for dj in -r..=r {
                        let (a, b) = (i + di, j + dj);
                        if a >= 0 && a < n && b >= 0 && b < n {
                            sum += self.counts[(a * n + b) as usize];
                            cells += 1.0;
                        }
                    }
                }
                out.counts[(i * n + j) as usize] = sum / cells;
            }
        }
        out
    }

    /// Bins that dominate their 8-neighbourhood (ties broken towards the
    /// lower index) and hold at least `min_fraction` of the largest bin.
    pub fn modes(&self, min_fraction: f64) -> Vec<(usize, usize)> {
        let n = self.bins() as isize;
        let peak = self.counts.iter().copied().fold(0.0, f64::max);
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = self.counts[(i * n + j) as usize];
                if v <= 0.0 || v < min_fraction * peak {
                    continue;
                }
                let mut is_mode = true;
                'scan: for di in -1..=1isize {
                    for dj in -1..=1isize {
                        let (a, b) = (i + di, j + dj);
                        if (di, dj) == (0, 0) || a < 0 || a >= n || b < 0 || b >= n {
                            continue;
                        }
                        let w = self.counts[(a * n + b) as usize];
                        let earlier = (a, b) < (i, j);
                        if w > v || (earlier && w == v) {
                            is_mode = false;
                            break 'scan;
                        }
                    }
                }
                if is_mode {
                    out.push((i as usize, j as usize));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_counts_have_zero_error() {
        let mut r = ChainReport::new(2, Some(2), false);
        r.record(&StepReport::default(), &State::from_labels(&[0, 1]));
        r.record(&StepReport::default(), &State::from_labels(&[1, 0]));
        assert_eq!(marginal_error(&r, 2).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_error_is_root_half() {
        let mut r = ChainReport::new(3, Some(2), false);
        for _ in 0..5 {
            r.record(&StepReport::default(), &State::from_labels(&[0, 1, 1]));
        }
        assert!((marginal_error(&r, 2).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(marginal_error(&ChainReport::new(3, Some(2), false), 2), Err(Error::EmptyReport)));
    }

    #[test]
    fn counters_accumulate_exactly() {
        let mut r = ChainReport::new(1, None, true);
        let s = StepReport { variable: 0, minibatch_size: 3, factor_evals: 7, accepted: true, accept_prob: 0.5, trials: 2 };
        r.record(&s, &State::new(vec![0.3]));
        r.record(&StepReport { accepted: false, ..s }, &State::new(vec![0.3]));
        assert_eq!((r.steps, r.factor_evals, r.minibatch_total, r.accepted, r.trials), (2, 14, 6, 1, 4));
        assert_eq!(r.acceptance_rate(), 0.5);
        assert_eq!(r.records().unwrap().len(), 2);
    }

    #[test]
    fn kl_direct_formula_and_symmetry() {
        assert_eq!(symmetric_kl(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 0.0);
        let direct = 0.4 * (0.9f64 / 0.5).ln() + (-0.4) * (0.1f64 / 0.5).ln();
        let kl = symmetric_kl(&[0.9, 0.1], &[0.5, 0.5]).unwrap();
        assert!((kl - direct).abs() < 1e-8);
        assert_eq!(kl, symmetric_kl(&[0.5, 0.5], &[0.9, 0.1]).unwrap());
        assert!(matches!(symmetric_kl(&[1.0], &[1.0, 1.0]), Err(Error::BinMismatch(1, 2))));
    }

    #[test]
    fn histogram_binning_edges() {
        let mut h = Histogram1d::new(0.0, 1.0, 4);
        assert!(h.add(0.0) && h.add(1.0) && h.add(0.26));
        assert!(!h.add(1.01));
        assert_eq!(h.counts(), &[1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn two_separated_bumps_give_two_modes() {
        let mut h = Histogram2d::new((0.0, 1.0), (0.0, 1.0), 20);
        for (cx, cy) in [(0.2, 0.2), (0.7, 0.8)] {
            for a in -12..=12 {
                for b in -12..=12 {
                    let w = (100.0 * (-((a * a + b * b) as f64) / 50.0).exp()) as usize;
                    for _ in 0..w {
                        h.add(cx + a as f64 * 0.01, cy + b as f64 * 0.01);
                    }
                }
            }
        }
        let modes = h.box_smoothed(5).modes(0.01);
        assert_eq!(modes.len(), 2);
        let c = h.center(modes[0].0, modes[0].1);
        assert!((c.0 - 0.2).abs() < 0.06 && (c.1 - 0.2).abs() < 0.06);
    }
}
