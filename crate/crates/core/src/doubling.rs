//! Doubling ratios, density ratios and density estimates.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{ols, radius_grid, trimmed_ols, LineFit};
use crate::geometry::{dist, unit_ball_volume};
use crate::measure::{Ball, WeightedCloud};

/// Expected in-ball sample count below which a radius is not used in grids.
pub const MIN_BALL_SAMPLES: usize = 500;
/// In-ball sample count below which a density estimate is refused.
pub const MIN_DENSITY_SAMPLES: usize = 50;
/// Differences of log-density below this are treated as noise.
pub const LOG_DENSITY_NOISE: f64 = 0.01;
/// Minimum number of point pairs for a Hölder fit of log D.
pub const MIN_HOLDER_PAIRS: usize = 20;
/// Default t values for doubling profiles.
pub const DEFAULT_T: [f64; 4] = [0.5, 0.625, 0.75, 0.875];

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidParameter(format!("t must lie in (0, 1] (got {t})")));
    }
    Ok(())
}

fn mass(cloud: &WeightedCloud, x: &[f64], r: f64) -> Result<f64> {
    Ok(cloud.ball_mass(&Ball::new(x.to_vec(), r)?))
}

/// `R_t(x,r) = μ(B(x,tr))/μ(B(x,r)) − tⁿ`.
pub fn doubling_ratio(cloud: &WeightedCloud, x: &[f64], t: f64, r: f64) -> Result<f64> {
    check_t(t)?;
    let outer = mass(cloud, x, r)?;
    if !(outer > 0.0) {
        return Err(Error::NotInSupport { radius: r });
    }
    let inner = if t == 1.0 { outer } else { mass(cloud, x, t * r)? };
    Ok(inner / outer - t.powi(cloud.n() as i32))
}

/// `μ(B(x,r))/(ω_n rⁿ)`; zero off the support.
pub fn density_ratio(cloud: &WeightedCloud, x: &[f64], r: f64) -> Result<f64> {
    let n = cloud.n();
    Ok(mass(cloud, x, r)? / (unit_ball_volume(n) * r.powi(n as i32)))
}

/// Constant of the extended doubling bound `|R_τ(x,r)| ≤ C·r^α` for
/// τ ∈ (0, ½), given the bound `C_K r^α` for t ∈ [½, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelescopeBound {
    /// `C_K/(1 − 2^{−n/2})`, valid for every τ.
    pub constant: f64,
    /// Minimal j with `2^{−j} ≤ τ`.
    pub levels: u32,
    /// `C_K Σ_{i<j} 2^{−in/2}`, the sum actually used at this τ.
    pub partial: f64,
}

pub fn telescope_bound(c_k: f64, alpha: f64, n: usize, tau: f64) -> Result<TelescopeBound> {
    if !(c_k > 0.0 && alpha > 0.0 && n >= 1) {
        return Err(Error::InvalidParameter("telescope bound needs C_K > 0, α > 0, n ≥ 1".into()));
    }
    if !(tau > 0.0 && tau < 0.5) {
        return Err(Error::InvalidParameter(format!("τ must lie in (0, 1/2) (got {tau})")));
    }
    let q = 2f64.powf(-(n as f64) / 2.0);
    let mut levels = 1u32;
    while 2f64.powi(-(levels as i32)) > tau {
        levels += 1;
    }
    let partial = c_k * (0..levels).map(|i| q.powi(i as i32)).sum::<f64>();
    Ok(TelescopeBound {
        constant: c_k / (1.0 - q),
        levels,
        partial,
    })
}

/// Descending radius grid from `r_max` down to the smallest radius whose ball
/// around `x` still holds at least `min_count` samples.
pub fn reliable_radii(cloud: &WeightedCloud, x: &[f64], r_max: f64, min_count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for r in radius_grid(r_max, r_max * 1e-6) {
        if cloud.ball_count(&Ball::new(x.to_vec(), r)?) < min_count {
            break;
        }
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingProfile {
    pub center: Vec<f64>,
    /// Descending.
    pub radii: Vec<f64>,
    pub t_values: Vec<f64>,
    /// `r_values[i][j] = R_{t_j}(x, radii[i])`.
    pub r_values: Vec<Vec<f64>>,
    /// Samples in `B(x, t_min·r)` per radius.
    pub inner_counts: Vec<usize>,
    /// Fit of `log max_t |R_t|` against `log r` over rows whose inner ball
    /// holds at least [`MIN_BALL_SAMPLES`]: slope α, `C_K = e^{intercept}`.
    pub fit: Option<LineFit>,
    pub alpha: Option<f64>,
    pub c_k: Option<f64>,
}

impl DoublingProfile {
    pub fn max_abs(&self) -> Vec<f64> {
        self.r_values
            .iter()
            .map(|row| row.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
            .collect()
    }
}

pub fn doubling_profile(cloud: &WeightedCloud, x: &[f64], radii: &[f64], t_values: &[f64]) -> Result<DoublingProfile> {
    for &t in t_values {
        check_t(t)?;
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("radii must be strictly descending".into()));
    }
    let r_values = radii
        .par_iter()
        .map(|&r| t_values.iter().map(|&t| doubling_ratio(cloud, x, t, r)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let t_min = t_values.iter().copied().fold(1.0, f64::min);
    let inner_counts = radii
        .iter()
        .map(|&r| Ball::new(x.to_vec(), t_min * r).map(|b| cloud.ball_count(&b)))
        .collect::<Result<Vec<_>>>()?;
    let mut profile = DoublingProfile {
        center: x.to_vec(),
        radii: radii.to_vec(),
        t_values: t_values.to_vec(),
        r_values,
        inner_counts,
        fit: None,
        alpha: None,
        c_k: None,
    };
    let (lx, ly): (Vec<f64>, Vec<f64>) = profile
        .radii
        .iter()
        .zip(profile.max_abs())
        .zip(&profile.inner_counts)
        .filter(|((_, v), c)| *v > 0.0 && **c >= MIN_BALL_SAMPLES)
        .map(|((r, v), _)| (r.ln(), v.ln()))
        .unzip();
    if lx.len() >= 3 {
        if let Ok(f) = trimmed_ols(&lx, &ly) {
            profile.alpha = Some(f.slope);
            profile.c_k = Some(f.intercept.exp());
            profile.fit = Some(f);
        }
    }
    Ok(profile)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    /// Linear fit of the ratio against `r^α̂`, read off at r = 0.
    Extrapolated,
    /// Ratio at the smallest radius.
    SmallestRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub counts: Vec<usize>,
    pub density: f64,
    pub method: DensityMethod,
    pub alpha_hat: Option<f64>,
    pub residual: f64,
}

/// Range of α̂ for which extrapolation is attempted.
const ALPHA_RANGE: (f64, f64) = (0.05, 4.0);

/// Estimates `D(x) = lim μ(B(x,r))/(ω_n rⁿ)`.
pub fn density_estimate(cloud: &WeightedCloud, x: &[f64], radii: &[f64]) -> Result<DensityReport> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("empty radius grid".into()));
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    let counts: Vec<usize> = sorted
        .iter()
        .map(|&r| Ball::new(x.to_vec(), r).map(|b| cloud.ball_count(&b)))
        .collect::<Result<_>>()?;
    let last = *counts.last().unwrap();
    if last < MIN_DENSITY_SAMPLES {
        return Err(Error::ResolutionExhausted {
            radius: *sorted.last().unwrap(),
            count: last,
            required: MIN_DENSITY_SAMPLES,
        });
    }
    let ratios: Vec<f64> = sorted
        .iter()
        .map(|&r| density_ratio(cloud, x, r))
        .collect::<Result<_>>()?;
    let profile = doubling_profile(cloud, x, &sorted, &DEFAULT_T)?;
    let smallest = *ratios.last().unwrap();
    let mut report = DensityReport {
        center: x.to_vec(),
        radii: sorted.clone(),
        ratios: ratios.clone(),
        counts,
        density: smallest,
        method: DensityMethod::SmallestRadius,
        alpha_hat: profile.alpha,
        residual: 0.0,
    };
    if let Some(a) = profile.alpha.filter(|a| (ALPHA_RANGE.0..=ALPHA_RANGE.1).contains(a)) {
        if sorted.len() >= 3 {
            let xs: Vec<f64> = sorted.iter().map(|r| r.powf(a)).collect();
            if let Ok(f) = ols(&xs, &ratios) {
                if f.intercept > 0.0 {
                    report.density = f.intercept;
                    report.method = DensityMethod::Extrapolated;
                    report.residual = f.rms;
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// Fitted exponent; `+∞` when the density is constant up to noise.
    pub exponent: f64,
    pub constant: f64,
    pub constant_density: bool,
    /// Pairs above the noise floor that entered the fit.
    pub used: usize,
}

/// Fits `log|log D(x) − log D(y)|` against `log|x − y|` over the given pairs.
pub fn holder_log_density(
    cloud: &WeightedCloud,
    pairs: &[(Vec<f64>, Vec<f64>)],
    radii: &[f64],
) -> Result<HolderFit> {
    if pairs.len() < MIN_HOLDER_PAIRS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_HOLDER_PAIRS} pairs (got {})",
            pairs.len()
        )));
    }
    let logs = pairs
        .par_iter()
        .map(|(x, y)| {
            let dx = density_estimate(cloud, x, radii)?.density;
            let dy = density_estimate(cloud, y, radii)?.density;
            Ok(((dx.ln() - dy.ln()).abs(), dist(x, y)))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (lx, ly): (Vec<f64>, Vec<f64>) = logs
        .iter()
        .filter(|(d, sep)| *d >= LOG_DENSITY_NOISE && *sep > 0.0)
        .map(|(d, sep)| (sep.ln(), d.ln()))
        .unzip();
    if lx.len() < 2 {
        return Ok(HolderFit {
            exponent: f64::INFINITY,
            constant: 0.0,
            constant_density: true,
            used: lx.len(),
        });
    }
    let f = trimmed_ols(&lx, &ly)?;
    Ok(HolderFit {
        exponent: f.slope,
        constant: f.intercept.exp(),
        constant_density: false,
        used: f.used,
    })
}

/// Rows `x_id,r,t,R_t`.
pub fn write_doubling_csv<W: Write>(out: &mut W, profiles: &[(usize, &DoublingProfile)]) -> Result<()> {
    writeln!(out, "x_id,r,t,R_t")?;
    for (id, p) in profiles {
        for (r, row) in p.radii.iter().zip(&p.r_values) {
            for (t, v) in p.t_values.iter().zip(row) {
                writeln!(out, "{id},{r},{t},{v}")?;
            }
        }
    }
    Ok(())
}

/// Rows `x_id,r,ratio`.
pub fn write_ratio_csv<W: Write>(out: &mut W, reports: &[(usize, &DensityReport)]) -> Result<()> {
    writeln!(out, "x_id,r,ratio")?;
    for (id, d) in reports {
        for (r, q) in d.radii.iter().zip(&d.ratios) {
            writeln!(out, "{id},{r},{q}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::CloudMeta;

    fn two_points() -> WeightedCloud {
        WeightedCloud::new(2, 1, vec![0.0, 0.0, 0.3, 0.0], vec![1.0, 3.0], CloudMeta::default()).unwrap()
    }

    #[test]
    fn ratio_at_t_one_is_zero() {
        let c = two_points();
        assert_eq!(doubling_ratio(&c, &[0.0, 0.0], 1.0, 0.5).unwrap(), 0.0);
        let r = doubling_ratio(&c, &[0.0, 0.0], 0.5, 0.5).unwrap();
        assert!((r - (0.25 - 0.5)).abs() < 1e-15);
        assert!(doubling_ratio(&c, &[5.0, 5.0], 0.5, 0.5).is_err());
        assert!(doubling_ratio(&c, &[0.0, 0.0], 0.0, 0.5).is_err());
    }

    #[test]
    fn telescope_values() {
        let b = telescope_bound(1.0, 1.0, 2, 0.1).unwrap();
        assert!((b.constant - 2.0).abs() < 1e-15);
        assert_eq!(b.levels, 4);
        assert!((b.partial - (1.0 + 0.5 + 0.25 + 0.125)).abs() < 1e-15);
        assert!(b.partial <= b.constant);
        let big = telescope_bound(3.0, 1.0, 200, 0.3).unwrap();
        assert!((big.constant - 3.0).abs() < 1e-12);
        assert!(telescope_bound(1.0, 1.0, 2, 0.5).is_err());
    }

    #[test]
    fn density_needs_resolution() {
        let c = two_points();
        let e = density_estimate(&c, &[0.0, 0.0], &[0.5, 0.1]).unwrap_err();
        assert!(e.to_string().contains("resolution exhausted"), "{e}");
    }
}
