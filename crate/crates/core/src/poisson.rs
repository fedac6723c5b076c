//! Poisson variates: sequential-search inversion for small means, Hörmann's
//! PTRS transformed rejection for large ones.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Means below this use inversion.
pub const INVERSION_CUTOFF: f64 = 30.0;

#[derive(Clone, Copy, Debug)]
pub enum Poisson {
    Zero,
    Inversion { mean: f64, p0: f64 },
    Ptrs(Ptrs),
}

#[derive(Clone, Copy, Debug)]
pub struct Ptrs {
    mean: f64,
    ln_mean: f64,
    b: f64,
    a: f64,
    inv_alpha: f64,
    v_r: f64,
}

impl Poisson {
    pub fn new(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(Error::InvalidParameter(format!("Poisson mean must be finite and >= 0, got {mean}")));
        }
        Ok(if mean == 0.0 {
            Poisson::Zero
        } else if mean < INVERSION_CUTOFF {
            Poisson::Inversion { mean, p0: (-mean).exp() }
        } else {
            let smu = mean.sqrt();
            let b = 0.931 + 2.53 * smu;
            Poisson::Ptrs(Ptrs {
                mean,
                ln_mean: mean.ln(),
                b,
                a: -0.059 + 0.02483 * b,
                inv_alpha: 1.1239 + 1.1328 / (b - 3.4),
                v_r: 0.9277 - 3.6224 / (b - 2.0),
            })
        })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Poisson::Zero => 0.0,
            Poisson::Inversion { mean, .. } => mean,
            Poisson::Ptrs(p) => p.mean,
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            Poisson::Zero => 0,
            Poisson::Inversion { mean, p0 } => {
                let u: f64 = rng.random();
                let mut k = 0u64;
                let mut p = p0;
                let mut cdf = p;
                // The tail beyond k = 200 has mass < 1e-100 for mean < 30.
                while u > cdf && k < 200 {
                    k += 1;
                    p *= mean / k as f64;
                    cdf += p;
                }
                k
            }
            Poisson::Ptrs(p) => p.sample(rng),
        }
    }
}

impl Ptrs {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        loop {
            let u = rng.random::<f64>() - 0.5;
            let v: f64 = rng.random();
            let us = 0.5 - u.abs();
            let k = ((2.0 * self.a / us + self.b) * u + self.mean + 0.43).floor();
            if us >= 0.07 && v <= self.v_r {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = (v * self.inv_alpha / (self.a / (us * us) + self.b)).ln();
            let rhs = -self.mean + k * self.ln_mean - ln_gamma(k + 1.0);
            if lhs <= rhs {
                return k as u64;
            }
        }
    }
}

/// `P(K = k)` for `K ~ Poisson(mean)`.
pub fn pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (kf * mean.ln() - mean - ln_gamma(kf + 1.0)).exp()
}
