//! Ball moments: the vector b, the quadratic form Q and its spectrum.
//!
//! ```text
//! b = (n+2)/(2 ω_n r^{n+2}) Σ (r² − |y−x|²)(y−x) w
//! Q = (n+2)/(ω_n r^{n+2}) Σ (y−x)(y−x)ᵀ w
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, sub, sym_eigen, unit_ball_volume, SymmetricForm};
use crate::measure::{Ball, WeightedCloud};

/// Split margins below this make the normal/tangent split meaningless.
pub const MIN_SPLIT_MARGIN: f64 = 0.2;
/// Default constant C in the flat-hypothesis bound `C·r^θ`.
pub const DEFAULT_FLAT_CONSTANT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub center: Vec<f64>,
    pub radius: f64,
    pub n: usize,
    pub b: Vec<f64>,
    pub q: SymmetricForm,
    pub trace: f64,
    pub mass: f64,
    pub count: usize,
}

impl MomentPair {
    pub fn codim(&self) -> usize {
        self.q.dim() - self.n
    }

    /// `Q̃(z) = |z|² − Q(z)`.
    pub fn q_tilde(&self, z: &[f64]) -> f64 {
        dot(z, z) - self.q.quadratic(z)
    }

    pub fn b_norm(&self) -> f64 {
        norm(&self.b)
    }
}

fn in_ball(cloud: &WeightedCloud, center: &[f64], r: f64) -> Result<Vec<usize>> {
    if center.len() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            got: center.len(),
        });
    }
    let idx = cloud.ball_indices(&Ball::new(center.to_vec(), r)?);
    if idx.is_empty() {
        return Err(Error::EmptyBall { radius: r });
    }
    Ok(idx)
}

fn normalizer(n: usize, r: f64) -> f64 {
    (n as f64 + 2.0) / (unit_ball_volume(n) * r.powi(n as i32 + 2))
}

/// The moment vector b at `(center, r)`.
pub fn moment_vector(cloud: &WeightedCloud, center: &[f64], r: f64) -> Result<Vec<f64>> {
    let idx = in_ball(cloud, center, r)?;
    let m = cloud.dim();
    let mut acc = vec![0.0; m];
    for &i in &idx {
        let d = sub(cloud.point(i), center);
        let s = (r * r - dot(&d, &d)) * cloud.weight(i);
        for (a, di) in acc.iter_mut().zip(&d) {
            *a += s * di;
        }
    }
    let c = normalizer(cloud.n(), r) / 2.0;
    Ok(acc.into_iter().map(|a| a * c).collect())
}

/// b and Q at `(center, r)`, with Q's eigendecomposition.
pub fn moment_form(cloud: &WeightedCloud, center: &[f64], r: f64) -> Result<MomentPair> {
    let idx = in_ball(cloud, center, r)?;
    let m = cloud.dim();
    let mut bacc = vec![0.0; m];
    let mut qacc = vec![0.0; m * m];
    let mut mass = 0.0;
    for &i in &idx {
        let w = cloud.weight(i);
        let d = sub(cloud.point(i), center);
        let s = (r * r - dot(&d, &d)) * w;
        mass += w;
        for a in 0..m {
            bacc[a] += s * d[a];
            let wa = w * d[a];
            for c in a..m {
                qacc[a * m + c] += wa * d[c];
            }
        }
    }
    let c = normalizer(cloud.n(), r);
    for a in 0..m {
        for col in a..m {
            let v = qacc[a * m + col] * c;
            qacc[a * m + col] = v;
            qacc[col * m + a] = v;
        }
    }
    let q = sym_eigen(&qacc, m)?;
    Ok(MomentPair {
        center: center.to_vec(),
        radius: r,
        n: cloud.n(),
        b: bacc.into_iter().map(|v| v * c / 2.0).collect(),
        trace: q.trace(),
        q,
        mass,
        count: idx.len(),
    })
}

/// `(n+2)/(ω_n r^{n+2}) Σ |y−x|² w`, the trace of Q computed directly.
pub fn second_moment_integral(cloud: &WeightedCloud, center: &[f64], r: f64) -> Result<f64> {
    let idx = in_ball(cloud, center, r)?;
    let s: f64 = idx
        .iter()
        .map(|&i| crate::geometry::dist2(cloud.point(i), center) * cloud.weight(i))
        .sum();
    Ok(s * normalizer(cloud.n(), r))
}

/// `Tr(Q) − n`.
pub fn trace_deviation(pair: &MomentPair) -> f64 {
    pair.trace - pair.n as f64
}

/// `|2⟨b, x−x₁⟩ + Q(x−x₁) − |x−x₁|²|` for x in the open ball `B(x₁, r/2)`.
pub fn quadratic_residual(pair: &MomentPair, x: &[f64]) -> Result<f64> {
    if x.len() != pair.center.len() {
        return Err(Error::DimensionMismatch {
            expected: pair.center.len(),
            got: x.len(),
        });
    }
    let d = sub(x, &pair.center);
    let dn = norm(&d);
    let limit = pair.radius / 2.0;
    if dn >= limit {
        return Err(Error::OutsideValidity { distance: dn, limit });
    }
    Ok((2.0 * dot(&pair.b, &d) + pair.q.quadratic(&d) - dot(&d, &d)).abs())
}

/// Sup over cloud points z of the rescaled residual
/// `|⟨2 b r^{−1−γ}, z⟩ − Q̃(z)|` with `z = (y − x₁)/r^{1+γ}`, `|z| < ½`.
/// Returns `None` when no sample lands in the region.
pub fn rescaled_residual(cloud: &WeightedCloud, pair: &MomentPair, gamma: f64) -> Result<Option<f64>> {
    let rho = pair.radius.powf(1.0 + gamma);
    let idx = cloud.ball_indices(&Ball::new(pair.center.clone(), rho / 2.0)?);
    let scale = 2.0 * pair.radius.powf(-1.0 - gamma);
    let mut worst: Option<f64> = None;
    for i in idx {
        let z: Vec<f64> = sub(cloud.point(i), &pair.center).iter().map(|v| v / rho).collect();
        let v = (scale * dot(&pair.b, &z) - pair.q_tilde(&z)).abs();
        worst = Some(worst.map_or(v, |w: f64| w.max(v)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatHypothesis {
    /// Exponent θ of the bound `C·r^θ`.
    pub theta: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub k: usize,
    pub eigenvalues: Vec<f64>,
    /// `Σ_{i≤k} λ_i`.
    pub normal_sum: f64,
    /// `max_i |λ_{k+i} − 1|`.
    pub tangent_deviation: f64,
    /// `λ_{k+1} − λ_k`.
    pub split_margin: f64,
    /// `λ_1 ≤ (2n+1)/(2m)`.
    pub lowest_bound_holds: bool,
    /// `λ_k ≤ (2n+1)/(2n+2)`.
    pub normal_bound_holds: bool,
    /// `sup_{|z|=1} |Q̃(z) − Σ_{l≤k} ⟨z,e_l⟩²|`.
    pub q_tilde_error: f64,
    pub flat_bound: Option<f64>,
    pub flat: Option<bool>,
}

impl SpectrumReport {
    pub fn split_ok(&self) -> bool {
        self.split_margin >= MIN_SPLIT_MARGIN
    }
}

pub fn spectrum_report(pair: &MomentPair, hypothesis: Option<FlatHypothesis>) -> SpectrumReport {
    let lam = pair.q.eigenvalues();
    let m = lam.len();
    let n = pair.n;
    let k = m - n;
    let normal_sum: f64 = lam[..k].iter().sum();
    let tangent_deviation = lam[k..].iter().fold(0.0_f64, |a, l| a.max((l - 1.0).abs()));
    let normal_abs = lam[..k].iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let flat_bound = hypothesis.map(|h| h.constant * pair.radius.powf(h.theta));
    SpectrumReport {
        k,
        eigenvalues: lam.to_vec(),
        normal_sum,
        tangent_deviation,
        split_margin: lam[k] - lam[k - 1],
        lowest_bound_holds: lam[0] <= (2 * n + 1) as f64 / (2 * m) as f64,
        normal_bound_holds: lam[k - 1] <= (2 * n + 1) as f64 / (2 * n + 2) as f64,
        q_tilde_error: normal_abs.max(tangent_deviation),
        flat_bound,
        flat: flat_bound.map(|c| normal_sum <= c && tangent_deviation <= c),
    }
}

/// Both sides of `Q̃(z) − Σ_{l≤k}⟨z,e_l⟩² = −Σ_{l≤k} λ_l z_l² + Σ_i (1−λ_{k+i}) z_{k+i}²`
/// with `z_l = ⟨z, e_l⟩`.
pub fn q_tilde_identity(pair: &MomentPair, z: &[f64]) -> (f64, f64) {
    let k = pair.codim();
    let e = pair.q.eigenvectors();
    let lam = pair.q.eigenvalues();
    let coords: Vec<f64> = e.iter().map(|v| dot(z, v)).collect();
    let lhs = pair.q_tilde(z) - coords[..k].iter().map(|c| c * c).sum::<f64>();
    let rhs = -coords[..k].iter().zip(lam).map(|(c, l)| l * c * c).sum::<f64>()
        + coords[k..].iter().zip(&lam[k..]).map(|(c, l)| (1.0 - l) * c * c).sum::<f64>();
    (lhs, rhs)
}
