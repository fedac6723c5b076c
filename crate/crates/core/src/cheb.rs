//! Chebyshev interpolation on arbitrary intervals.
//!
//! A [`ChebPoly`] stores `Σ_k α_k T_k(2(x−a)/(b−a) − 1)`. Interpolants are
//! built from samples at the Chebyshev extreme points `cos(jπ/m)`, so the
//! coefficients are a type-I DCT of the samples. [`NormalizedCdf`] turns a
//! (possibly slightly negative) density polynomial into an exactly
//! integrable, monotone CDF that can be inverted by bisection.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Below this size the O(n²) transform is used.
const DIRECT_DCT_LIMIT: usize = 32;

/// Bisection steps for CDF inversion; also caps crossing refinement.
pub const BISECTION_STEPS: usize = 60;

/// Crossing refinement stops once the bracket shrinks by this factor.
const CROSSING_TOLERANCE: f64 = 1e-9;

/// Relative clamp applied to density polynomials before building a CDF.
pub const DEFAULT_FLOOR_RATIO: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// `r_k = v_0 + (−1)^k v_n + 2 Σ_{j=1}^{n−1} v_j cos(πjk/n)` for `k = 0..=n`.
fn dct1(values: &[f64]) -> Vec<f64> {
    let n = values.len() - 1;
    if n == 0 {
        return vec![2.0 * values[0]];
    }
    if n < DIRECT_DCT_LIMIT {
        return (0..=n)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let inner: f64 = (1..n).map(|j| values[j] * (PI * (j * k) as f64 / n as f64).cos()).sum();
                values[0] + sign * values[n] + 2.0 * inner
            })
            .collect();
    }
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> = values
        .iter()
        .chain(values[1..n].iter().rev())
        .map(|&v| rustfft::num_complex::Complex::new(v, 0.0))
        .collect();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(2 * n));
    fft.process(&mut buf);
    buf[..=n].iter().map(|c| c.re).collect()
}

/// Polynomial in the Chebyshev basis of `[lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebPoly {
    coeffs: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl ChebPoly {
    pub fn new(coeffs: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("a polynomial needs at least one coefficient".into()));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidDomain(format!("[{lower}, {upper}]")));
        }
        Ok(ChebPoly { coeffs, lower, upper })
    }

    pub fn constant(c: f64, lower: f64, upper: f64) -> Result<Self> {
        ChebPoly::new(vec![c], lower, upper)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// The `m + 1` interpolation nodes on `[lower, upper]`, from `upper` down
    /// to `lower`. Degree 0 uses the midpoint.
    pub fn nodes(m: usize, lower: f64, upper: f64) -> Vec<f64> {
        let half = 0.5 * (upper - lower);
        let mid = 0.5 * (upper + lower);
        if m == 0 {
            return vec![mid];
        }
        (0..=m)
            .map(|j| {
                // exact endpoints avoid cos(π) rounding outside the interval
                if j == 0 {
                    upper
                } else if j == m {
                    lower
                } else {
                    mid + half * (PI * j as f64 / m as f64).cos()
                }
            })
            .collect()
    }

    /// Interpolant through `values[j] = f(nodes[j])`.
    pub fn from_node_values(values: &[f64], lower: f64, upper: f64) -> Result<Self> {
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteSample { node, value });
        }
        let m = values.len().checked_sub(1).ok_or_else(|| Error::InvalidParameter("no samples".into()))?;
        if m == 0 {
            return ChebPoly::new(vec![values[0]], lower, upper);
        }
        let mut coeffs: Vec<f64> = dct1(values).into_iter().map(|r| r / m as f64).collect();
        coeffs[0] *= 0.5;
        coeffs[m] *= 0.5;
        ChebPoly::new(coeffs, lower, upper)
    }

    /// Degree-`m` interpolant of `f` on `[lower, upper]`.
    pub fn interpolate<F: FnMut(f64) -> f64>(mut f: F, m: usize, lower: f64, upper: f64) -> Result<Self> {
        let values: Vec<f64> = ChebPoly::nodes(m, lower, upper).into_iter().map(&mut f).collect();
        ChebPoly::from_node_values(&values, lower, upper)
    }

    #[inline]
    fn to_unit(&self, x: f64) -> f64 {
        (2.0 * x - (self.lower + self.upper)) / (self.upper - self.lower)
    }

    /// Clenshaw evaluation without a domain check.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let t = self.to_unit(x);
        let two_t = 2.0 * t;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs[1..].iter().rev() {
            let b0 = c + two_t * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + t * b1 - b2
    }

    /// Clenshaw evaluation; `x` must lie in the domain.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        let slack = 1e-12 * (self.upper - self.lower);
        if !(x >= self.lower - slack && x <= self.upper + slack) {
            return Err(Error::OutsideDomain { x, lower: self.lower, upper: self.upper });
        }
        Ok(self.eval(x))
    }

    /// Evaluation at a complex point (affinely mapped like real points).
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let t = (2.0 * z - (self.lower + self.upper)) / (self.upper - self.lower);
        let two_t = 2.0 * t;
        let mut b1 = Complex64::new(0.0, 0.0);
        let mut b2 = Complex64::new(0.0, 0.0);
        for &c in self.coeffs[1..].iter().rev() {
            let b0 = two_t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    /// Values on the degree-`n` node grid (`n ≥ degree`), via the inverse DCT.
    pub fn values_on_nodes(&self, n: usize) -> Vec<f64> {
        assert!(n >= self.degree(), "grid degree {n} below polynomial degree {}", self.degree());
        if n == 0 {
            return vec![self.coeffs[0]];
        }
        let mut padded = vec![0.0; n + 1];
        padded[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        padded[0] *= 2.0;
        padded[n] *= 2.0;
        dct1(&padded).into_iter().map(|r| 0.5 * r).collect()
    }

    /// Derivative, degree one lower (a constant stays a zero constant).
    pub fn derivative(&self) -> ChebPoly {
        let m = self.degree();
        if m == 0 {
            return ChebPoly { coeffs: vec![0.0], lower: self.lower, upper: self.upper };
        }
        let scale = 2.0 / (self.upper - self.lower);
        let mut out = vec![0.0; m + 1];
        for k in (1..=m).rev() {
            out[k - 1] = out.get(k + 1).copied().unwrap_or(0.0) + 2.0 * k as f64 * self.coeffs[k];
        }
        out[0] *= 0.5;
        out.truncate(m);
        ChebPoly { coeffs: out.into_iter().map(|c| c * scale).collect(), lower: self.lower, upper: self.upper }
    }

    /// Antiderivative `P` with `P' = p` and `P(lower) = 0`, degree one higher.
    pub fn antiderivative(&self) -> ChebPoly {
        let m = self.degree();
        let c = |k: usize| self.coeffs.get(k).copied().unwrap_or(0.0);
        let scale = 0.5 * (self.upper - self.lower);
        let mut out = vec![0.0; m + 2];
        out[1] = scale * (c(0) - 0.5 * c(2));
        for (k, slot) in out.iter_mut().enumerate().skip(2) {
            *slot = scale * (c(k - 1) - c(k + 1)) / (2.0 * k as f64);
        }
        // T_k(−1) = (−1)^k
        let at_lower: f64 = out.iter().enumerate().skip(1).map(|(k, v)| if k % 2 == 0 { *v } else { -*v }).sum();
        out[0] = -at_lower;
        ChebPoly { coeffs: out, lower: self.lower, upper: self.upper }
    }
}

/// Degree-`m` Chebyshev interpolant of `f` on `[a, b]`.
pub fn interpolate<F: FnMut(f64) -> f64>(f: F, m: usize, a: f64, b: f64) -> Result<ChebPoly> {
    ChebPoly::interpolate(f, m, a, b)
}

pub fn evaluate(p: &ChebPoly, x: f64) -> Result<f64> {
    p.evaluate(x)
}

pub fn antiderivative(p: &ChebPoly) -> ChebPoly {
    p.antiderivative()
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Segment {
    start: f64,
    end: f64,
    /// Density follows the polynomial (true) or the floor (false).
    follows_poly: bool,
    /// Unnormalized mass before `start`.
    mass_before: f64,
    /// Antiderivative at `start`; zero on floor pieces.
    primitive_start: f64,
}

/// CDF of the clamped density `max(p, floor)`, normalized to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct NormalizedCdf {
    density: ChebPoly,
    primitive: ChebPoly,
    segments: Vec<Segment>,
    total: f64,
    floor: f64,
}

/// `1e−12 · max |p|` over a node grid twice as fine as `p`.
pub fn default_floor(p: &ChebPoly) -> f64 {
    let grid = p.values_on_nodes((2 * p.degree()).max(16));
    DEFAULT_FLOOR_RATIO * grid.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

impl NormalizedCdf {
    /// Builds the CDF of `max(p, floor)`. Crossings of `p = floor` are located
    /// on a grid of twice the polynomial degree and refined by regula falsi.
    /// A grid interval whose ends are above the floor is also searched when
    /// `p'` goes from negative to positive across it, so a dip between two
    /// nodes is clamped too. A dip containing two turning points of `p'` inside
    /// one interval can still be missed.
    pub fn new(p: &ChebPoly, floor: f64) -> Result<Self> {
        if !(floor.is_finite() && floor >= 0.0) {
            return Err(Error::InvalidParameter(format!("floor must be finite and >= 0, got {floor}")));
        }
        let (a, b) = p.domain();
        let primitive = p.antiderivative();
        let n = (2 * p.degree()).max(16);
        let mut xs = ChebPoly::nodes(n, a, b);
        let mut vals = p.values_on_nodes(n);
        let dp = p.derivative();
        let mut slopes = dp.values_on_nodes(n);
        xs.reverse();
        vals.reverse();
        slopes.reverse();

        // Breakpoints where p − floor changes sign, with the side of each piece.
        let mut cuts = vec![a];
        let mut above = vec![vals[0] > floor];
        for w in 0..n {
            let (g0, g1) = (vals[w] - floor, vals[w + 1] - floor);
            if (g0 > 0.0) != (g1 > 0.0) {
                cuts.push(refine_crossing(p, floor, xs[w], xs[w + 1], g0, g1));
                above.push(g1 > 0.0);
            } else if g0 > 0.0 && slopes[w] < 0.0 && slopes[w + 1] > 0.0 {
                let turn = refine_crossing(&dp, 0.0, xs[w], xs[w + 1], slopes[w], slopes[w + 1]);
                let g_turn = p.eval(turn) - floor;
                if g_turn <= 0.0 {
                    cuts.push(refine_crossing(p, floor, xs[w], turn, g0, g_turn));
                    above.push(false);
                    cuts.push(refine_crossing(p, floor, turn, xs[w + 1], g_turn, g1));
                    above.push(true);
                }
            }
        }
        cuts.push(b);
        let primitive_at: Vec<f64> = (0..cuts.len())
            .map(|c| {
                let touches_poly = (c > 0 && above[c - 1]) || above.get(c).copied().unwrap_or(false);
                if touches_poly {
                    primitive.eval(cuts[c])
                } else {
                    0.0
                }
            })
            .collect();

        let mut segments = Vec::with_capacity(above.len());
        let mut mass = 0.0;
        for (c, &follows_poly) in above.iter().enumerate() {
            let (start, end) = (cuts[c], cuts[c + 1]);
            if end <= start {
                continue;
            }
            let seg_mass = if follows_poly { primitive_at[c + 1] - primitive_at[c] } else { floor * (end - start) };
            segments.push(Segment { start, end, follows_poly, mass_before: mass, primitive_start: primitive_at[c] });
            mass += seg_mass.max(0.0);
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::NonPositiveMass(mass));
        }
        Ok(NormalizedCdf { density: p.clone(), primitive, segments, total: mass, floor })
    }

    pub fn domain(&self) -> (f64, f64) {
        self.density.domain()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// `∫ max(p, floor)` over the domain.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    fn segment_of(&self, v: f64) -> &Segment {
        let idx = self.segments.partition_point(|s| s.end < v).min(self.segments.len() - 1);
        &self.segments[idx]
    }

    fn mass_up_to(&self, seg: &Segment, v: f64) -> f64 {
        let inner = if seg.follows_poly {
            self.primitive.eval(v) - seg.primitive_start
        } else {
            self.floor * (v - seg.start)
        };
        seg.mass_before + inner.max(0.0)
    }

    /// `F(v)`.
    pub fn cdf(&self, v: f64) -> f64 {
        let (a, b) = self.domain();
        let v = v.clamp(a, b);
        let seg = self.segment_of(v);
        (self.mass_up_to(seg, v) / self.total).clamp(0.0, 1.0)
    }

    /// Normalized proposal density `F'(v)`.
    pub fn density(&self, v: f64) -> f64 {
        let (a, b) = self.domain();
        let v = v.clamp(a, b);
        let seg = self.segment_of(v);
        // the CDF integrand itself, so proposal ratios stay exact even where a
        // cut sits slightly off the true crossing
        let raw = if seg.follows_poly { self.density.eval(v).max(f64::MIN_POSITIVE) } else { self.floor };
        raw / self.total
    }

    /// Solves `F(v) = u` by bisection inside the segment holding mass `u`.
    pub fn invert(&self, u: f64) -> f64 {
        let (a, b) = self.domain();
        if u <= 0.0 {
            return a;
        }
        if u >= 1.0 {
            return b;
        }
        let target = u * self.total;
        let idx = self.segments.partition_point(|s| s.mass_before <= target).saturating_sub(1);
        let seg = &self.segments[idx];
        let (mut lo, mut hi) = (seg.start, seg.end);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if self.mass_up_to(seg, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Root of `p − floor` in `[lo, hi]` given end values of opposite sign (or zero),
/// by Illinois regula falsi. The bracket is kept, so the result lies in
/// `[lo, hi]` even if convergence stalls.
fn refine_crossing(p: &ChebPoly, floor: f64, mut lo: f64, mut hi: f64, mut f_lo: f64, mut f_hi: f64) -> f64 {
    let tolerance = CROSSING_TOLERANCE * (hi - lo);
    let mut side = 0i8;
    for _ in 0..BISECTION_STEPS {
        if hi - lo <= tolerance {
            break;
        }
        let mut mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let f_mid = p.eval(mid) - floor;
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (lo + hi)
}

/// CDF of `max(p, floor)`.
pub fn make_cdf(p: &ChebPoly, floor: f64) -> Result<NormalizedCdf> {
    NormalizedCdf::new(p, floor)
}

/// `v` with `F(v) = u`.
pub fn invert_cdf(cdf: &NormalizedCdf, u: f64) -> f64 {
    cdf.invert(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chain_rng;
    use rand::Rng;

    fn grid(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| a + (b - a) * i as f64 / (n - 1) as f64)
    }

    /// Σ α_k T_k(t) with T_k from the three-term recurrence.
    fn direct_sum(coeffs: &[f64], t: f64) -> f64 {
        let (mut t0, mut t1) = (1.0, t);
        let mut acc = coeffs[0];
        for (k, &c) in coeffs.iter().enumerate().skip(1) {
            if k > 1 {
                let t2 = 2.0 * t * t1 - t0;
                t0 = t1;
                t1 = t2;
            }
            acc += c * t1;
        }
        acc
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        (f(a) + f(b) + inner) * h / 3.0
    }

    #[test]
    fn cubic_is_reproduced() {
        let p = interpolate(|x| 2.0 * x * x * x - x, 3, -1.0, 1.0).unwrap();
        let err = grid(-1.0, 1.0, 1000).map(|x| (p.eval(x) - (2.0 * x * x * x - x)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        // 2x³ − x = ½T₃ + ½T₁
        assert!((p.coeffs()[3] - 0.5).abs() < 1e-14 && (p.coeffs()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn constant_has_single_nonzero_coefficient() {
        for m in [0, 1, 5, 40] {
            let p = interpolate(|_| 2.5, m, 3.0, 7.0).unwrap();
            assert!((p.coeffs()[0] - 2.5).abs() < 1e-12);
            assert!(p.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));
            assert!((p.evaluate(4.0).unwrap() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn t1_at_half() {
        let p = ChebPoly::new(vec![0.0, 1.0], -1.0, 1.0).unwrap();
        assert_eq!(p.evaluate(0.5).unwrap(), 0.5);
    }

    #[test]
    fn clenshaw_matches_direct_summation() {
        let mut rng = chain_rng(21, 0);
        let coeffs: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ChebPoly::new(coeffs.clone(), -2.0, 3.0).unwrap();
        for _ in 0..100 {
            let x: f64 = rng.random_range(-2.0..3.0);
            let t = (2.0 * x - 1.0) / 5.0;
            let direct = direct_sum(&coeffs, t);
            assert!((p.eval(x) - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn outside_domain_is_an_error() {
        let p = ChebPoly::constant(1.0, 0.0, 1.0).unwrap();
        assert!(matches!(p.evaluate(1.5), Err(Error::OutsideDomain { .. })));
        assert!(p.evaluate(-0.1).is_err());
    }

    #[test]
    fn non_finite_sample_names_node() {
        let err = interpolate(|x| if x > 0.9 { f64::NAN } else { x }, 4, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { node: 0, .. }));
    }

    #[test]
    fn fast_and_direct_transforms_agree() {
        let f = |x: f64| (3.0 * x).sin() + x.exp();
        for m in [31, 32, 33, 64, 100] {
            let values: Vec<f64> = ChebPoly::nodes(m, -1.0, 2.0).into_iter().map(f).collect();
            let fast = ChebPoly::from_node_values(&values, -1.0, 2.0).unwrap();
            // direct O(m²) oracle
            let direct: Vec<f64> = (0..=m)
                .map(|k| {
                    let s: f64 = (0..=m)
                        .map(|j| {
                            let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                            w * values[j] * (PI * (j * k) as f64 / m as f64).cos()
                        })
                        .sum();
                    let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                    2.0 * w * s / m as f64
                })
                .collect();
            for (c, d) in fast.coeffs().iter().zip(&direct) {
                assert!((c - d).abs() < 1e-12, "m={m}");
            }
        }
    }

    #[test]
    fn interpolant_hits_samples_at_nodes() {
        let f = |x: f64| 1.0 / (1.0 + 25.0 * x * x);
        for m in [7, 50] {
            let p = interpolate(f, m, -1.0, 1.0).unwrap();
            for x in ChebPoly::nodes(m, -1.0, 1.0) {
                assert!((p.eval(x) - f(x)).abs() <= 1e-10 * f(x).abs());
            }
            let on_grid = p.values_on_nodes(m);
            for (v, x) in on_grid.iter().zip(ChebPoly::nodes(m, -1.0, 1.0)) {
                assert!((v - f(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn antiderivative_of_one_and_t1() {
        let one = ChebPoly::constant(1.0, 0.0, 1.0).unwrap();
        let p = one.antiderivative();
        for x in grid(0.0, 1.0, 11) {
            assert!((p.eval(x) - x).abs() < 1e-15);
        }
        let t1 = ChebPoly::new(vec![0.0, 1.0], -1.0, 1.0).unwrap();
        let p = t1.antiderivative();
        for x in grid(-1.0, 1.0, 21) {
            assert!((p.eval(x) - (x * x - 1.0) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn antiderivative_derivative_and_quadrature() {
        let mut rng = chain_rng(5, 1);
        let coeffs: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ChebPoly::new(coeffs, -0.5, 2.0).unwrap();
        let big = p.antiderivative();
        assert_eq!(big.degree(), p.degree() + 1);
        assert!(big.eval(-0.5).abs() < 1e-14);
        let h = 1e-5;
        for x in grid(-0.4, 1.9, 37) {
            let fd = (big.eval(x + h) - big.eval(x - h)) / (2.0 * h);
            assert!((fd - p.eval(x)).abs() <= 1e-6 * p.eval(x).abs().max(1.0));
        }
        let quad = simpson(|x| p.eval(x), -0.5, 2.0, 2000);
        assert!((big.eval(2.0) - quad).abs() < 1e-8);
    }

    #[test]
    fn derivative_inverts_antiderivative() {
        let mut rng = chain_rng(5, 2);
        let coeffs: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ChebPoly::new(coeffs, -2.0, 3.0).unwrap();
        let back = p.antiderivative().derivative();
        assert_eq!(back.degree(), p.degree());
        for (x, y) in back.coeffs().iter().zip(p.coeffs()) {
            assert!((x - y).abs() < 1e-13);
        }
        let h = 1e-5;
        let dp = p.derivative();
        for x in grid(-1.9, 2.9, 23) {
            let fd = (p.eval(x + h) - p.eval(x - h)) / (2.0 * h);
            assert!((fd - dp.eval(x)).abs() < 1e-5);
        }
        assert_eq!(ChebPoly::constant(3.0, 0.0, 1.0).unwrap().derivative().eval(0.5), 0.0);
    }

    #[test]
    fn dip_between_grid_nodes_is_clamped() {
        // dips below zero on about [0.31, 0.34], between two positive grid nodes
        let coeffs = vec![
            0.48260061387413433,
            -0.8219405896826286,
            -0.33444131104760016,
            -0.788108053510872,
            -0.9175486596057145,
            -0.317274641871088,
            -0.5443982202845219,
            0.10322764577907288,
            0.3493762492457039,
        ];
        let p = ChebPoly::new(coeffs, -1.0, 1.0).unwrap();
        assert!(p.eval(0.325) < 0.0);
        let cdf = NormalizedCdf::new(&p, 1e-6).unwrap();
        let mut prev = 0.0;
        for x in grid(-1.0, 1.0, 2001) {
            let c = cdf.cdf(x);
            assert!(c >= prev, "cdf decreases at {x}");
            prev = c;
        }
        assert_eq!(cdf.density(0.325), 1e-6 / cdf.total_mass());
    }

    #[test]
    fn uniform_cdf() {
        let p = ChebPoly::constant(1.0, 0.0, 1.0).unwrap();
        let cdf = make_cdf(&p, 0.0).unwrap();
        for v in grid(0.0, 1.0, 11) {
            assert!((cdf.cdf(v) - v).abs() < 1e-15);
        }
        assert!((invert_cdf(&cdf, 0.25) - 0.25).abs() < 1e-15);
        assert_eq!(invert_cdf(&cdf, 0.0), 0.0);
        assert_eq!(invert_cdf(&cdf, 1.0), 1.0);
        assert_eq!(cdf.cdf(1.0), 1.0);
    }

    #[test]
    fn negative_lobe_is_clamped() {
        // x² − 0.1 on [−1, 1] dips below zero around the origin.
        let p = interpolate(|x| x * x - 0.1, 2, -1.0, 1.0).unwrap();
        let floor = default_floor(&p);
        assert!(floor > 0.0);
        let cdf = make_cdf(&p, floor).unwrap();
        let mut prev = 0.0;
        for v in grid(-1.0, 1.0, 2001) {
            let f = cdf.cdf(v);
            assert!(f >= prev - 1e-15);
            prev = f;
            assert!(cdf.density(v) > 0.0);
        }
        assert!((cdf.cdf(1.0) - 1.0).abs() < 1e-15);
        // mass equals the integral of the positive part
        let r = 0.1f64.sqrt();
        let exact = 2.0 * ((1.0 / 3.0 - 0.1) - (r * r * r / 3.0 - 0.1 * r));
        assert!((cdf.total_mass() - exact).abs() < 1e-9);
        let zero = ChebPoly::constant(-1.0, 0.0, 1.0).unwrap();
        assert!(matches!(make_cdf(&zero, 0.0), Err(Error::NonPositiveMass(_))));
    }

    #[test]
    fn inversion_against_grid_lookup() {
        // density 1 + x on [0, 1], F(v) = (v + v²/2) / 1.5
        let p = interpolate(|x| 1.0 + x, 1, 0.0, 1.0).unwrap();
        let cdf = make_cdf(&p, default_floor(&p)).unwrap();
        let xs: Vec<f64> = grid(0.0, 1.0, 200_001).collect();
        let fs: Vec<f64> = xs.iter().map(|v| (v + v * v / 2.0) / 1.5).collect();
        let mut rng = chain_rng(17, 0);
        for _ in 0..100 {
            let u: f64 = rng.random();
            let idx = fs.partition_point(|&f| f < u).min(xs.len() - 1);
            let v = invert_cdf(&cdf, u);
            assert!((v - xs[idx]).abs() < 1e-5 + 1e-6);
            assert!((cdf.cdf(v) - u).abs() < 1e-10);
        }
    }

    #[test]
    fn round_trip_through_oscillating_density() {
        let p = interpolate(|x| (5.0 * x).cos() + 0.3, 14, -1.0, 1.0).unwrap();
        let cdf = make_cdf(&p, default_floor(&p)).unwrap();
        let mut rng = chain_rng(2, 3);
        for _ in 0..1000 {
            let u: f64 = rng.random();
            assert!((cdf.cdf(cdf.invert(u)) - u).abs() < 1e-9);
        }
    }
}
