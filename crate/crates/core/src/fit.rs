//! Log-log regression helpers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::seeded_rng;

/// Fraction of residuals dropped at each tail by [`trimmed_ols`].
pub const TRIM_FRACTION: f64 = 0.05;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Geometric ratio between consecutive radii of default grids.
pub const GRID_RATIO: f64 = 0.840_896_415_253_714_6; // 2^{-1/4}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual over the points kept.
    pub rms: f64,
    pub used: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::InsufficientRange { usable: n, required: 2 });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidParameter("regression abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        rms: (rss / n as f64).sqrt(),
        used: n,
    })
}

/// OLS, then refit without the top and bottom [`TRIM_FRACTION`] of residuals.
/// With fewer than 20 points nothing is trimmed.
pub fn trimmed_ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let first = ols(x, y)?;
    let drop = (x.len() as f64 * TRIM_FRACTION).floor() as usize;
    if drop == 0 {
        return Ok(first);
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    let resid = |i: usize| y[i] - first.intercept - first.slope * x[i];
    order.sort_by(|&a, &b| resid(a).total_cmp(&resid(b)).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[drop..x.len() - drop].to_vec();
    keep.sort_unstable();
    let kx: Vec<f64> = keep.iter().map(|&i| x[i]).collect();
    let ky: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
    ols(&kx, &ky)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rms: f64,
    pub used: usize,
}

impl SlopeEstimate {
    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

/// Trimmed slope with a 95% percentile bootstrap interval over resampled
/// (x, y) pairs. Resamples with degenerate abscissae are skipped.
pub fn bootstrap_slope(x: &[f64], y: &[f64], seed: u64) -> Result<SlopeEstimate> {
    let fit = trimmed_ols(x, y)?;
    let mut rng = seeded_rng(seed);
    let n = x.len();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut bx = vec![0.0; n];
    let mut by = vec![0.0; n];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for k in 0..n {
            let i = rng.gen_range(0..n);
            bx[k] = x[i];
            by[k] = y[i];
        }
        if let Ok(f) = trimmed_ols(&bx, &by) {
            slopes.push(f.slope);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let (lo, hi) = if slopes.is_empty() {
        (fit.slope, fit.slope)
    } else {
        (quantile(&slopes, 0.025), quantile(&slopes, 0.975))
    };
    Ok(SlopeEstimate {
        slope: fit.slope,
        intercept: fit.intercept,
        ci_low: lo,
        ci_high: hi,
        rms: fit.rms,
        used: fit.used,
    })
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Descending geometric grid from `r_max` with ratio [`GRID_RATIO`], stopping
/// before the first radius below `r_min`.
pub fn radius_grid(r_max: f64, r_min: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = r_max;
    while r >= r_min * (1.0 - 1e-12) {
        out.push(r);
        r *= GRID_RATIO;
    }
    out
}
