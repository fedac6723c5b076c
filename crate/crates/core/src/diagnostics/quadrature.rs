use crate::error::{Error, Result};

use super::metrics::Histogram2d;

/// Composite Simpson weights for `n` (even) intervals of width `h`.
fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    (0..=n)
        .map(|j| {
            let w = if j == 0 || j == n {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

fn check_grid(bins: usize, sub: usize) -> Result<()> {
    if bins == 0 || sub == 0 || sub % 2 == 1 {
        return Err(Error::InvalidParameter(format!("need bins > 0 and an even sub-grid, got {bins}, {sub}")));
    }
    Ok(())
}

/// Normalized bin masses of the first-coordinate marginal of
/// `exp(log_density(a, b))` on a box, by composite Simpson with `sub`
/// (even) intervals per bin in each direction.
pub fn marginal_reference<F: Fn(f64, f64) -> f64>(
    log_density: F,
    x_range: (f64, f64),
    y_range: (f64, f64),
    bins: usize,
    sub: usize,
) -> Result<Vec<f64>> {
    check_grid(bins, sub)?;
    let nx = bins * sub;
    let ny = bins * sub;
    let hx = (x_range.1 - x_range.0) / nx as f64;
    let hy = (y_range.1 - y_range.0) / ny as f64;
    let wy = simpson_weights(ny, hy);
    let logs: Vec<Vec<f64>> = (0..=nx)
        .map(|a| {
            let x = x_range.0 + a as f64 * hx;
            (0..=ny).map(|b| log_density(x, y_range.0 + b as f64 * hy)).collect()
        })
        .collect();
    let top = logs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let column: Vec<f64> = logs.iter().map(|row| row.iter().zip(&wy).map(|(l, w)| w * (l - top).exp()).sum()).collect();
    let wx = simpson_weights(sub, hx);
    let masses: Vec<f64> =
        (0..bins).map(|k| (0..=sub).map(|j| wx[j] * column[k * sub + j]).sum()).collect();
    let total: f64 = masses.iter().sum();
    Ok(masses.into_iter().map(|m| m / total).collect())
}

/// Normalized 2-D bin masses of `exp(log_density)`. Bins whose coarse
/// samples all lie more than `prune_nats` below the coarse maximum are set to
/// zero without refinement.
pub fn joint_reference<F: Fn(f64, f64) -> f64>(
    log_density: F,
    x_range: (f64, f64),
    y_range: (f64, f64),
    bins: usize,
    sub: usize,
    prune_nats: f64,
) -> Result<Histogram2d> {
    check_grid(bins, sub)?;
    let wxb = (x_range.1 - x_range.0) / bins as f64;
    let wyb = (y_range.1 - y_range.0) / bins as f64;
    // coarse pass: 3×3 samples per bin, shared edges
    let coarse_n = 2 * bins;
    let coarse: Vec<f64> = (0..=coarse_n)
        .flat_map(|a| {
            let x = x_range.0 + a as f64 * wxb / 2.0;
            let f = &log_density;
            (0..=coarse_n).map(move |b| f(x, y_range.0 + b as f64 * wyb / 2.0))
        })
        .collect();
    let coarse_max = coarse.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bin_peak = |i: usize, j: usize| {
        (0..3)
            .flat_map(|da| (0..3).map(move |db| (2 * i + da) * (coarse_n + 1) + 2 * j + db))
            .map(|idx| coarse[idx])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (hx, hy) = (wxb / sub as f64, wyb / sub as f64);
    let (wx, wy) = (simpson_weights(sub, hx), simpson_weights(sub, hy));
    let mut masses = vec![0.0; bins * bins];
    for i in 0..bins {
        for j in 0..bins {
            if bin_peak(i, j) < coarse_max - prune_nats {
                continue;
            }
            let mut m = 0.0;
            for (a, &wa) in wx.iter().enumerate() {
                let x = x_range.0 + i as f64 * wxb + a as f64 * hx;
                for (b, &wb) in wy.iter().enumerate() {
                    let y = y_range.0 + j as f64 * wyb + b as f64 * hy;
                    m += wa * wb * (log_density(x, y) - coarse_max).exp();
                }
            }
            masses[i * bins + j] = m;
        }
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonPositiveMass(total));
    }
    masses.iter_mut().for_each(|m| *m /= total);
    Histogram2d::from_counts(x_range, y_range, bins, masses)
}
