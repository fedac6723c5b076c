//! Walker–Vose alias tables: O(n) construction, O(1) draws.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AliasTable {
    threshold: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds a table for the distribution proportional to `weights`.
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidParameter("alias table needs at least one weight".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("alias weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("alias weights sum to zero".into()));
        }

        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut threshold = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);

        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            threshold[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers differ from 1 only by rounding.
        for i in small.into_iter().chain(large) {
            threshold[i] = 1.0;
        }
        Ok(AliasTable { threshold, alias })
    }

    pub fn len(&self) -> usize {
        self.threshold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threshold.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.threshold.len();
        let u = rng.random::<f64>() * n as f64;
        let column = (u as usize).min(n - 1);
        if u - (column as f64) < self.threshold[column] {
            column
        } else {
            self.alias[column] as usize
        }
    }

    /// Probability the table assigns to outcome `i`, reconstructed from the columns.
    pub fn probability(&self, i: usize) -> f64 {
        let n = self.threshold.len() as f64;
        let own = self.threshold[i];
        let aliased: f64 = self
            .alias
            .iter()
            .zip(&self.threshold)
            .enumerate()
            .filter(|&(col, (&a, _))| a as usize == i && col != i)
            .map(|(_, (_, &t))| 1.0 - t)
            .sum();
        (own + aliased) / n
    }
}
