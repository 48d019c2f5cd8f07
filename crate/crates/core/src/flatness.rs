//! Flatness functionals θ, β and β̃₂, decay fits and regular/singular labels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doubling::MIN_BALL_SAMPLES;
use crate::error::{Error, Result};
use crate::fit::{bootstrap_slope, SlopeEstimate};
use crate::geometry::{dot, sym_eigen, unit_ball_volume, AffinePlane};
use crate::kdtree::KdTree;
use crate::measure::{Ball, WeightedCloud};
use crate::sampling::{seeded_rng, Directions};

pub const DEFAULT_RESOLUTION: usize = 10_000;
/// Plane-side grid size used while optimizing θ; the final value uses the
/// requested resolution.
pub const COARSE_RESOLUTION: usize = 512;
pub const MAX_SWEEPS: usize = 50;
/// Rotation step (radians) below which the local search stops.
pub const MIN_STEP: f64 = 1e-6;
const INITIAL_STEP: f64 = 0.1;
const MOVES_PER_PAIR: usize = 8;
/// Relative change of θ under doubled resolution accepted as converged.
pub const RESOLUTION_TOLERANCE: f64 = 0.05;
pub const MIN_FIT_SCALES: usize = 6;
/// A θ value within this multiple of the sampling floor carries no signal.
pub const FLOOR_FACTOR: f64 = 2.0;
/// β or β̃₂ values below this are treated as exact zeros.
pub const NUMERIC_FLOOR: f64 = 1e-9;
const GRID_SEED: u64 = 0x5eed0f91a9e;
const FIT_SEED: u64 = 20_240_601;

/// In-ball samples in coordinates relative to the center.
struct LocalBall {
    m: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl LocalBall {
    fn new(cloud: &WeightedCloud, x: &[f64], r: f64) -> Result<Self> {
        if x.len() != cloud.dim() {
            return Err(Error::DimensionMismatch {
                expected: cloud.dim(),
                got: x.len(),
            });
        }
        let idx = cloud.ball_indices(&Ball::new(x.to_vec(), r)?);
        if idx.is_empty() {
            return Err(Error::EmptyBall { radius: r });
        }
        let m = cloud.dim();
        let mut coords = Vec::with_capacity(idx.len() * m);
        let mut weights = Vec::with_capacity(idx.len());
        for &i in &idx {
            coords.extend(cloud.point(i).iter().zip(x).map(|(p, c)| p - c));
            weights.push(cloud.weight(i));
        }
        Ok(Self { m, coords, weights })
    }

    fn count(&self) -> usize {
        self.weights.len()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.m..(i + 1) * self.m]
    }

    /// Orthonormal basis of ℝ^m from the second-moment matrix: the top n
    /// eigenvectors first, then the rest.
    fn eigen_basis(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        let m = self.m;
        let mut mat = vec![0.0; m * m];
        let total: f64 = self.weights.iter().sum();
        for (i, w) in self.weights.iter().enumerate() {
            let d = self.point(i);
            for a in 0..m {
                for b in a..m {
                    mat[a * m + b] += w * d[a] * d[b];
                }
            }
        }
        for a in 0..m {
            for b in a..m {
                mat[a * m + b] /= total;
                mat[b * m + a] = mat[a * m + b];
            }
        }
        let form = sym_eigen(&mat, m)?;
        let e = form.eigenvectors();
        let k = m - n;
        Ok(e[k..].iter().chain(&e[..k]).cloned().collect())
    }
}

/// Something minimized over planes by rotating basis pairs.
trait PlaneObjective {
    /// Value for the current basis, or for the basis with the pair (a, b)
    /// rotated by angle t.
    fn eval(&mut self, basis: &[Vec<f64>], n: usize, trial: Option<(usize, usize, f64)>) -> f64;
    fn commit(&mut self, _a: usize, _b: usize, _t: f64) {}
}

fn rotate(basis: &mut [Vec<f64>], a: usize, b: usize, t: f64) {
    let (s, c) = t.sin_cos();
    for j in 0..basis[a].len() {
        let fa = basis[a][j];
        let fb = basis[b][j];
        basis[a][j] = c * fa + s * fb;
        basis[b][j] = -s * fa + c * fb;
    }
}

/// Coordinate descent on the Grassmannian: for each tangent/normal pair try
/// rotations by ±h and keep the better one while it improves; halve h after
/// a sweep without improvement.
fn descend<O: PlaneObjective>(basis: &mut [Vec<f64>], n: usize, obj: &mut O) -> f64 {
    let m = basis.len();
    let mut best = obj.eval(basis, n, None);
    let mut h = INITIAL_STEP;
    for _ in 0..MAX_SWEEPS {
        let start = best;
        for a in 0..n {
            for b in n..m {
                for _ in 0..MOVES_PER_PAIR {
                    let fp = obj.eval(basis, n, Some((a, b, h)));
                    let fm = obj.eval(basis, n, Some((a, b, -h)));
                    let (f, t) = if fp <= fm { (fp, h) } else { (fm, -h) };
                    if f < best {
                        obj.commit(a, b, t);
                        rotate(basis, a, b, t);
                        best = f;
                    } else {
                        break;
                    }
                }
            }
        }
        if best >= start {
            h *= 0.5;
            if h < MIN_STEP {
                break;
            }
        }
    }
    best
}

/// Max squared distance from the in-ball samples to the plane spanned by the
/// first n basis vectors, tracked through normal-space coordinates.
struct SupDistance<'a> {
    ball: &'a LocalBall,
    /// Coordinates along basis vectors, `count × m`.
    proj: Vec<f64>,
    dist2: Vec<f64>,
}

impl<'a> SupDistance<'a> {
    fn new(ball: &'a LocalBall, basis: &[Vec<f64>], n: usize) -> Self {
        let m = ball.m;
        let count = ball.count();
        let mut proj = Vec::with_capacity(count * m);
        let mut dist2 = Vec::with_capacity(count);
        for i in 0..count {
            let p = ball.point(i);
            let mut s = 0.0;
            for (j, e) in basis.iter().enumerate() {
                let c = dot(p, e);
                proj.push(c);
                if j >= n {
                    s += c * c;
                }
            }
            dist2.push(s);
        }
        Self { ball, proj, dist2 }
    }

    fn trial_max(&self, trial: Option<(usize, usize, f64)>) -> f64 {
        let m = self.ball.m;
        match trial {
            None => self.dist2.iter().fold(0.0, |a: f64, &d| a.max(d)),
            Some((a, b, t)) => {
                let (s, c) = t.sin_cos();
                let mut worst = 0.0_f64;
                for (i, d) in self.dist2.iter().enumerate() {
                    let ca = self.proj[i * m + a];
                    let cb = self.proj[i * m + b];
                    let nb = -s * ca + c * cb;
                    worst = worst.max(d - cb * cb + nb * nb);
                }
                worst
            }
        }
    }

    fn distances(&self) -> Vec<f64> {
        self.dist2.iter().map(|d| d.max(0.0).sqrt()).collect()
    }

    fn apply(&mut self, a: usize, b: usize, t: f64) {
        let m = self.ball.m;
        let (s, c) = t.sin_cos();
        for i in 0..self.dist2.len() {
            let ca = self.proj[i * m + a];
            let cb = self.proj[i * m + b];
            let na = c * ca + s * cb;
            let nb = -s * ca + c * cb;
            self.proj[i * m + a] = na;
            self.proj[i * m + b] = nb;
            self.dist2[i] += nb * nb - cb * cb;
        }
    }
}

impl PlaneObjective for SupDistance<'_> {
    fn eval(&mut self, _basis: &[Vec<f64>], _n: usize, trial: Option<(usize, usize, f64)>) -> f64 {
        self.trial_max(trial)
    }

    fn commit(&mut self, a: usize, b: usize, t: f64) {
        self.apply(a, b, t);
    }
}

/// `max + (N−1)/N·(max − second max)`.
pub fn jackknife_sup(values: &[f64]) -> f64 {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in values {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    if values.len() < 2 {
        return first;
    }
    let n = values.len() as f64;
    first + (n - 1.0) / n * (first - second)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaResult {
    pub value: f64,
    pub jackknife: f64,
    pub plane: AffinePlane,
}

/// `β(x,ρ) = inf_P sup_{y ∈ Σ∩B(x,ρ)} dist(y,P)/ρ` over n-planes P through x.
pub fn beta_inf(cloud: &WeightedCloud, x: &[f64], rho: f64) -> Result<BetaResult> {
    let ball = LocalBall::new(cloud, x, rho)?;
    let n = cloud.n();
    let mut basis = ball.eigen_basis(n)?;
    let (_, result) = optimize_beta(&ball, &mut basis, n, x, rho)?;
    Ok(result)
}

fn optimize_beta(
    ball: &LocalBall,
    basis: &mut [Vec<f64>],
    n: usize,
    x: &[f64],
    rho: f64,
) -> Result<(f64, BetaResult)> {
    let mut obj = SupDistance::new(ball, basis, n);
    let best2 = descend(basis, n, &mut obj);
    let dists = obj.distances();
    let plane = AffinePlane::new(x.to_vec(), basis[..n].to_vec())?;
    Ok((
        best2,
        BetaResult {
            value: best2.max(0.0).sqrt() / rho,
            jackknife: jackknife_sup(&dists) / rho,
            plane,
        },
    ))
}

/// `max_{y ∈ ball} dist(y, P)/ρ` for a fixed plane P through the center.
pub fn beta_for_plane(cloud: &WeightedCloud, x: &[f64], rho: f64, plane: &AffinePlane) -> Result<f64> {
    let ball = LocalBall::new(cloud, x, rho)?;
    let normals = plane.normals();
    let mut worst = 0.0_f64;
    for i in 0..ball.count() {
        let p = ball.point(i);
        let mut s = 0.0;
        let shift: Vec<f64> = p.iter().zip(x).zip(plane.base()).map(|((d, c), b)| d + c - b).collect();
        for e in &normals {
            let c = dot(&shift, e);
            s += c * c;
        }
        worst = worst.max(s);
    }
    Ok(worst.sqrt() / rho)
}

/// Quasi-uniform points in the unit n-ball, flat `count × n`.
fn plane_grid(n: usize, count: usize) -> Vec<f64> {
    let dirs = Directions::new(n, &mut seeded_rng(GRID_SEED));
    let mut out = Vec::with_capacity(count * n);
    for i in 0..count {
        let rho = ((i as f64 + 0.5) / count as f64).powf(1.0 / n as f64);
        out.extend(dirs.at(i).into_iter().map(|d| rho * d));
    }
    out
}

/// Distances from grid points of `L ∩ B(0,r)` to the nearest support point.
fn plane_side(tree: &KdTree, grid: &[f64], frame: &[Vec<f64>], r: f64) -> Vec<f64> {
    let n = frame.len();
    let m = frame[0].len();
    let query = |g: &[f64]| {
        let mut q = vec![0.0; m];
        for (t, f) in g.iter().zip(frame) {
            for (qi, fi) in q.iter_mut().zip(f) {
                *qi += r * t * fi;
            }
        }
        tree.nearest2(&q).sqrt()
    };
    if grid.len() / n >= 256 {
        grid.par_chunks(n).map(query).collect()
    } else {
        grid.chunks(n).map(query).collect()
    }
}

struct ThetaObjective<'a> {
    sup: SupDistance<'a>,
    tree: &'a KdTree,
    grid: Vec<f64>,
    r: f64,
}

impl PlaneObjective for ThetaObjective<'_> {
    fn eval(&mut self, basis: &[Vec<f64>], n: usize, trial: Option<(usize, usize, f64)>) -> f64 {
        let support = self.sup.trial_max(trial).max(0.0).sqrt();
        let frame: Vec<Vec<f64>> = match trial {
            None => basis[..n].to_vec(),
            Some((a, b, t)) => {
                let mut f = basis[..n].to_vec();
                let (s, c) = t.sin_cos();
                for (fj, bj) in f[a].iter_mut().zip(&basis[b]) {
                    *fj = c * *fj + s * bj;
                }
                f
            }
        };
        let plane = plane_side(self.tree, &self.grid, &frame, self.r)
            .into_iter()
            .fold(0.0, f64::max);
        (support + plane) / self.r
    }

    fn commit(&mut self, a: usize, b: usize, t: f64) {
        self.sup.apply(a, b, t);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaResult {
    pub value: f64,
    pub jackknife: f64,
    /// `sup_{y ∈ Σ∩B} dist(y, L)/r`.
    pub support_side: f64,
    /// `sup_{z ∈ L∩B} dist(z, Σ∩B)/r` on the grid.
    pub plane_side: f64,
    pub plane: AffinePlane,
    pub resolution: usize,
    /// θ for the same plane with twice the grid points.
    pub doubled: f64,
    pub converged: bool,
}

/// `θ(x,r) = inf_L D[Σ∩B(x,r), L∩B(x,r)]/r` over n-planes L through x,
/// with D the sum of both one-sided sups. The plane side is evaluated on
/// `resolution` quasi-uniform points of `L∩B`. The center counts as a
/// support point.
pub fn theta(cloud: &WeightedCloud, x: &[f64], r: f64, resolution: usize) -> Result<ThetaResult> {
    let ball = LocalBall::new(cloud, x, r)?;
    let n = cloud.n();
    let eigen = ball.eigen_basis(n)?;
    let mut beta_basis = eigen.clone();
    optimize_beta(&ball, &mut beta_basis, n, x, r)?;
    theta_from_starts(&ball, n, x, r, resolution, &[eigen, beta_basis])
}

fn theta_from_starts(
    ball: &LocalBall,
    n: usize,
    x: &[f64],
    r: f64,
    resolution: usize,
    starts: &[Vec<Vec<f64>>],
) -> Result<ThetaResult> {
    if resolution == 0 {
        return Err(Error::InvalidParameter("θ resolution must be positive".into()));
    }
    let mut pts = ball.coords.clone();
    pts.extend(std::iter::repeat_n(0.0, ball.m));
    let tree = KdTree::new(ball.m, &pts);
    let coarse = plane_grid(n, resolution.min(COARSE_RESOLUTION));

    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for start in starts {
        let mut basis = start.clone();
        let mut obj = ThetaObjective {
            sup: SupDistance::new(ball, &basis, n),
            tree: &tree,
            grid: coarse.clone(),
            r,
        };
        let v = descend(&mut basis, n, &mut obj);
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, basis));
        }
    }
    let (_, basis) = best.expect("at least one start");
    let frame = &basis[..n];

    let sup = SupDistance::new(ball, &basis, n);
    let dists = sup.distances();
    let support = dists.iter().fold(0.0, |a: f64, &d| a.max(d));
    let fine = plane_side(&tree, &plane_grid(n, resolution), frame, r);
    let plane = fine.iter().fold(0.0, |a: f64, &d| a.max(d));
    let doubled_plane = plane_side(&tree, &plane_grid(n, 2 * resolution), frame, r)
        .into_iter()
        .fold(0.0, f64::max);
    let value = (support + plane) / r;
    let doubled = (support + doubled_plane) / r;
    Ok(ThetaResult {
        value,
        jackknife: (jackknife_sup(&dists) + jackknife_sup(&fine)) / r,
        support_side: support / r,
        plane_side: plane / r,
        plane: AffinePlane::new(x.to_vec(), frame.to_vec())?,
        resolution,
        doubled,
        converged: value == 0.0 || ((doubled - value) / value).abs() < RESOLUTION_TOLERANCE,
    })
}

/// The cutoff φ: 1 on [0,2], 0 on [3,∞), a C^∞ ramp in between.
pub fn bump(s: f64) -> f64 {
    if s <= 2.0 {
        1.0
    } else if s >= 3.0 {
        0.0
    } else {
        ramp(3.0 - s)
    }
}

fn ramp(s: f64) -> f64 {
    let g = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    g(s) / (g(s) + g(1.0 - s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beta2Result {
    pub value: f64,
    /// Best affine plane through the φ-weighted centroid.
    pub plane: AffinePlane,
}

/// `β̃₂(x,r) = (r^{−n−2} min_L ∫ φ(|y−x|/r) dist(y,L)² dμ)^{1/2}` over affine
/// n-planes L.
pub fn beta2_smooth(cloud: &WeightedCloud, x: &[f64], r: f64) -> Result<Beta2Result> {
    let ball = LocalBall::new(cloud, x, 3.0 * r)?;
    let n = cloud.n();
    let m = ball.m;
    let phi: Vec<f64> = (0..ball.count())
        .map(|i| bump(dot(ball.point(i), ball.point(i)).sqrt() / r) * ball.weights[i])
        .collect();
    let total: f64 = phi.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyBall { radius: 3.0 * r });
    }
    let mut centroid = vec![0.0; m];
    for (i, w) in phi.iter().enumerate() {
        for (c, d) in centroid.iter_mut().zip(ball.point(i)) {
            *c += w * d;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= total);
    let mut mat = vec![0.0; m * m];
    for (i, w) in phi.iter().enumerate() {
        let d: Vec<f64> = ball.point(i).iter().zip(&centroid).map(|(a, c)| a - c).collect();
        for a in 0..m {
            for b in a..m {
                mat[a * m + b] += w * d[a] * d[b];
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            mat[b * m + a] = mat[a * m + b];
        }
    }
    let form = sym_eigen(&mat, m)?;
    let k = m - n;
    let normals = &form.eigenvectors()[..k];
    let residual: f64 = phi
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let d: Vec<f64> = ball.point(i).iter().zip(&centroid).map(|(a, c)| a - c).collect();
            w * normals.iter().map(|e| dot(&d, e).powi(2)).sum::<f64>()
        })
        .sum();
    let base: Vec<f64> = centroid.iter().zip(x).map(|(c, xi)| c + xi).collect();
    Ok(Beta2Result {
        value: (residual / r.powi(n as i32 + 2)).sqrt(),
        plane: AffinePlane::new(base, form.eigenvectors()[k..].to_vec())?,
    })
}

/// The β̃₂ integrand for an arbitrary affine plane.
pub fn beta2_for_plane(cloud: &WeightedCloud, x: &[f64], r: f64, plane: &AffinePlane) -> Result<f64> {
    let ball = LocalBall::new(cloud, x, 3.0 * r)?;
    let normals = plane.normals();
    let mut s = 0.0;
    for i in 0..ball.count() {
        let p = ball.point(i);
        let w = bump(dot(p, p).sqrt() / r) * ball.weights[i];
        let d: Vec<f64> = p.iter().zip(x).zip(plane.base()).map(|((a, c), b)| a + c - b).collect();
        s += w * normals.iter().map(|e| dot(&d, e).powi(2)).sum::<f64>();
    }
    Ok((s / r.powi(plane.dim() as i32 + 2)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub r: f64,
    pub count: usize,
    pub theta: f64,
    pub theta_jackknife: f64,
    pub theta_converged: bool,
    pub beta: f64,
    pub beta_jackknife: f64,
    pub beta2: f64,
    /// Sampling floor for θ: typical sample spacing divided by r.
    pub floor: f64,
    pub plane: AffinePlane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecayFit {
    Fitted(SlopeEstimate),
    /// Values sit at the sampling floor on too many scales to fit.
    FloorLimited,
    InsufficientRange { usable: usize },
}

impl DecayFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            DecayFit::Fitted(s) => Some(s.slope),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFits {
    pub theta: DecayFit,
    pub beta: DecayFit,
    pub beta2: DecayFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessProfile {
    pub center: Vec<f64>,
    pub scales: Vec<ScaleRecord>,
    pub fits: DecayFits,
    /// θ at the smallest scale stays above [`NON_FLAT_THETA`].
    pub non_flat: bool,
}

/// θ at the smallest scale above which a profile is called non-flat.
pub const NON_FLAT_THETA: f64 = 0.1;

/// θ sampling floor `(ω_n/count)^{1/n}` for a ball holding `count` samples.
pub fn theta_floor(n: usize, count: usize) -> f64 {
    (unit_ball_volume(n) / count.max(1) as f64).powf(1.0 / n as f64)
}

/// One scale of a profile. β is the better of its own optimum and the
/// support side of θ's plane, so `β ≤ θ` holds by construction.
pub fn scale_record(cloud: &WeightedCloud, x: &[f64], r: f64, resolution: usize) -> Result<ScaleRecord> {
    let ball = LocalBall::new(cloud, x, r)?;
    let n = cloud.n();
    let eigen = ball.eigen_basis(n)?;
    let mut beta_basis = eigen.clone();
    let (_, mut beta) = optimize_beta(&ball, &mut beta_basis, n, x, r)?;
    let th = theta_from_starts(&ball, n, x, r, resolution, &[eigen, beta_basis])?;
    if th.support_side < beta.value {
        let mut basis: Vec<Vec<f64>> = th.plane.frame().to_vec();
        basis.extend(th.plane.normals());
        let sup = SupDistance::new(&ball, &basis, n);
        beta = BetaResult {
            value: th.support_side,
            jackknife: jackknife_sup(&sup.distances()) / r,
            plane: th.plane.clone(),
        };
    }
    let b2 = beta2_smooth(cloud, x, r)?;
    Ok(ScaleRecord {
        r,
        count: ball.count(),
        theta: th.value,
        theta_jackknife: th.jackknife,
        theta_converged: th.converged,
        beta: beta.value,
        beta_jackknife: beta.jackknife,
        beta2: b2.value,
        floor: theta_floor(n, ball.count()),
        plane: beta.plane,
    })
}

fn decay_fit(radii: &[f64], values: &[f64], floors: &[f64]) -> DecayFit {
    let (lx, ly): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(values)
        .zip(floors)
        .filter(|((_, v), f)| **v > FLOOR_FACTOR * **f)
        .map(|((r, v), _)| (r.ln(), v.ln()))
        .unzip();
    if lx.len() >= MIN_FIT_SCALES {
        match bootstrap_slope(&lx, &ly, FIT_SEED) {
            Ok(s) => DecayFit::Fitted(s),
            Err(_) => DecayFit::InsufficientRange { usable: lx.len() },
        }
    } else if lx.len() * 2 < values.len() {
        DecayFit::FloorLimited
    } else {
        DecayFit::InsufficientRange { usable: lx.len() }
    }
}

/// θ, β and β̃₂ over a radius grid, with trimmed log-log decay fits.
pub fn flatness_profile(cloud: &WeightedCloud, x: &[f64], radii: &[f64], resolution: usize) -> Result<FlatnessProfile> {
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let scales = sorted
        .par_iter()
        .map(|&r| scale_record(cloud, x, r, resolution))
        .collect::<Result<Vec<_>>>()?;
    Ok(profile_from_scales(x, scales))
}

fn profile_from_scales(x: &[f64], scales: Vec<ScaleRecord>) -> FlatnessProfile {
    let rs: Vec<f64> = scales.iter().map(|s| s.r).collect();
    let floors: Vec<f64> = scales.iter().map(|s| s.floor).collect();
    let zero = vec![NUMERIC_FLOOR / FLOOR_FACTOR; scales.len()];
    let fits = DecayFits {
        theta: decay_fit(&rs, &scales.iter().map(|s| s.theta).collect::<Vec<_>>(), &floors),
        beta: decay_fit(&rs, &scales.iter().map(|s| s.beta).collect::<Vec<_>>(), &zero),
        beta2: decay_fit(&rs, &scales.iter().map(|s| s.beta2).collect::<Vec<_>>(), &zero),
    };
    let non_flat = scales.last().is_some_and(|s| s.theta >= NON_FLAT_THETA);
    FlatnessProfile {
        center: x.to_vec(),
        scales,
        fits,
        non_flat,
    }
}

/// Uniform profile over a set of centers: at each radius every field is the
/// sup over the centers (count is the min), as in `θ_K(r) = sup_{x∈K} θ(x,r)`.
/// `center` holds the first center; `plane` is that of the center with the
/// largest β.
pub fn uniform_profile(
    cloud: &WeightedCloud,
    centers: &[Vec<f64>],
    radii: &[f64],
    resolution: usize,
) -> Result<FlatnessProfile> {
    let first = centers
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty center set".into()))?;
    let profiles = centers
        .iter()
        .map(|c| flatness_profile(cloud, c, radii, resolution))
        .collect::<Result<Vec<_>>>()?;
    let mut scales = profiles[0].scales.clone();
    for p in &profiles[1..] {
        for (acc, s) in scales.iter_mut().zip(&p.scales) {
            if s.beta > acc.beta {
                acc.beta = s.beta;
                acc.beta_jackknife = s.beta_jackknife;
                acc.plane = s.plane.clone();
            }
            if s.theta > acc.theta {
                acc.theta = s.theta;
                acc.theta_jackknife = s.theta_jackknife;
            }
            acc.theta_converged &= s.theta_converged;
            acc.beta2 = acc.beta2.max(s.beta2);
            acc.count = acc.count.min(s.count);
            acc.floor = acc.floor.max(s.floor);
        }
    }
    Ok(profile_from_scales(first, scales))
}

/// Slope of log β against log r with a bootstrap interval.
pub fn fit_beta_exponent(profile: &FlatnessProfile) -> Result<SlopeEstimate> {
    let radii: Vec<f64> = profile.scales.iter().map(|s| s.r).collect();
    let betas: Vec<f64> = profile.scales.iter().map(|s| s.beta).collect();
    fit_power_law(&radii, &betas)
}

/// Trimmed log-log slope of `values` against `radii`, ignoring values at
/// the numeric floor. Needs [`MIN_FIT_SCALES`] usable scales.
pub fn fit_power_law(radii: &[f64], values: &[f64]) -> Result<SlopeEstimate> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(values)
        .filter(|(r, v)| **v > NUMERIC_FLOOR && **r > 0.0)
        .map(|(r, v)| (r.ln(), v.ln()))
        .unzip();
    if lx.len() < MIN_FIT_SCALES {
        return Err(Error::InsufficientRange {
            usable: lx.len(),
            required: MIN_FIT_SCALES,
        });
    }
    bootstrap_slope(&lx, &ly, FIT_SEED)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointLabel {
    Regular,
    Singular,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointClass {
    pub center: Vec<f64>,
    pub label: PointLabel,
    /// Largest grid radius below which every θ stays under η.
    pub r_star: Option<f64>,
    pub radii: Vec<f64>,
    pub thetas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub eta: f64,
    /// Grid radii offered; each center uses those holding ≥ 500 samples.
    pub radii: Vec<f64>,
    pub points: Vec<PointClass>,
}

/// Labels each center from θ on its smallest decade of usable radii
/// (`r ≤ 10·r_min`): regular if θ < η throughout, singular if θ ≥ η
/// throughout, undetermined otherwise.
pub fn classify_points(
    cloud: &WeightedCloud,
    centers: &[Vec<f64>],
    eta: f64,
    radii: &[f64],
    resolution: usize,
) -> Result<ClassificationReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("η must lie in (0, 1) (got {eta})")));
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let points = centers
        .par_iter()
        .map(|c| classify_one(cloud, c, eta, &sorted, resolution))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassificationReport {
        eta,
        radii: sorted,
        points,
    })
}

fn classify_one(cloud: &WeightedCloud, center: &[f64], eta: f64, radii: &[f64], resolution: usize) -> Result<PointClass> {
    let mut used = Vec::new();
    for &r in radii {
        if cloud.ball_count(&Ball::new(center.to_vec(), r)?) >= MIN_BALL_SAMPLES {
            used.push(r);
        }
    }
    let thetas = used
        .par_iter()
        .map(|&r| theta(cloud, center, r, resolution).map(|t| t.value))
        .collect::<Result<Vec<f64>>>()?;
    let mut out = PointClass {
        center: center.to_vec(),
        label: PointLabel::Undetermined,
        r_star: None,
        radii: used.clone(),
        thetas: thetas.clone(),
    };
    let Some(&r_min) = used.last() else {
        return Ok(out);
    };
    let decade: Vec<f64> = used
        .iter()
        .zip(&thetas)
        .filter(|(r, _)| **r <= 10.0 * r_min * (1.0 + 1e-12))
        .map(|(_, t)| *t)
        .collect();
    for (r, t) in used.iter().zip(&thetas).rev() {
        if *t < eta {
            out.r_star = Some(*r);
        } else {
            break;
        }
    }
    out.label = if decade.iter().all(|t| *t < eta) {
        PointLabel::Regular
    } else if decade.iter().all(|t| *t >= eta) {
        PointLabel::Singular
    } else {
        PointLabel::Undetermined
    };
    Ok(out)
}

/// `{"center_id", "scales":[{"r","theta","beta","beta2","plane"}], "fits"}`.
pub fn profile_json(center_id: usize, profile: &FlatnessProfile) -> serde_json::Value {
    serde_json::json!({
        "center_id": center_id,
        "center": profile.center,
        "scales": profile.scales,
        "fits": profile.fits,
        "non_flat": profile.non_flat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::CloudMeta;

    #[test]
    fn bump_shape() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(2.0), 1.0);
        assert_eq!(bump(3.0), 0.0);
        assert!((bump(2.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = bump(2.0 + i as f64 / 100.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn jackknife_of_sup() {
        assert_eq!(jackknife_sup(&[1.0]), 1.0);
        assert!((jackknife_sup(&[0.0, 1.0, 2.0, 3.0]) - 3.75).abs() < 1e-15);
    }

    fn grid_segment() -> WeightedCloud {
        let pts: Vec<Vec<f64>> = (0..2000)
            .map(|i| {
                let t = -1.0 + (i as f64 + 0.5) * 0.001;
                vec![t * 0.6, t * 0.8]
            })
            .collect();
        WeightedCloud::from_points(1, &pts, vec![0.001; 2000], CloudMeta::default()).unwrap()
    }

    #[test]
    fn line_in_plane() {
        let c = grid_segment();
        let b = beta_inf(&c, &[0.0, 0.0], 0.5).unwrap();
        assert!(b.value < 1e-12, "{}", b.value);
        let t = theta(&c, &[0.0, 0.0], 0.5, 1000).unwrap();
        assert!(t.value < 0.01, "{}", t.value);
        let b2 = beta2_smooth(&c, &[0.0, 0.0], 0.1).unwrap();
        assert!(b2.value < 1e-9);
    }

    #[test]
    fn optimizer_finds_rotated_line() {
        // Two-point clouds off a line: the best line through 0 bisects.
        let pts = vec![vec![1.0, 0.2], vec![1.0, -0.2], vec![-1.0, 0.2], vec![-1.0, -0.2]];
        let c = WeightedCloud::from_points(1, &pts, vec![1.0; 4], CloudMeta::default()).unwrap();
        let b = beta_inf(&c, &[0.0, 0.0], 2.0).unwrap();
        assert!((b.value - 0.1).abs() < 1e-6, "{}", b.value);
    }

    #[test]
    fn power_law_fit() {
        let radii: Vec<f64> = (0..10).map(|i| 0.5 * 0.8f64.powi(i)).collect();
        let vals: Vec<f64> = radii.iter().map(|r| r.powf(0.7)).collect();
        let f = fit_power_law(&radii, &vals).unwrap();
        assert!((f.slope - 0.7).abs() < 1e-6);
        let flat = vec![0.5; 10];
        assert!(fit_power_law(&radii, &flat).unwrap().slope.abs() < 0.02);
        let e = fit_power_law(&radii[..5], &vals[..5]).unwrap_err();
        assert!(e.to_string().contains("insufficient dynamic range"));
    }
}
