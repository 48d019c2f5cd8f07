//! Synthetic measures with exact ℋⁿ weights and known ground truth.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, unit_sphere_area, AffinePlane};
use crate::measure::{CloudMeta, GroundTruth, WeightedCloud};
use crate::sampling::{ball_points, random_unit, seeded_rng, sphere_points};

pub const MIN_SAMPLES: usize = 1000;
/// Series terms with amplitude below this are dropped.
pub const SERIES_CUTOFF: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Plane,
    Sphere,
    KpCone,
    HolderGraph,
    PerturbedDensity,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Plane => "plane",
            GeneratorKind::Sphere => "sphere",
            GeneratorKind::KpCone => "kp_cone",
            GeneratorKind::HolderGraph => "holder_graph",
            GeneratorKind::PerturbedDensity => "perturbed_density",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "plane" => GeneratorKind::Plane,
            "sphere" => GeneratorKind::Sphere,
            "kp_cone" => GeneratorKind::KpCone,
            "holder_graph" => GeneratorKind::HolderGraph,
            "perturbed_density" => GeneratorKind::PerturbedDensity,
            other => return Err(Error::InvalidParameter(format!("unknown generator kind '{other}'"))),
        })
    }
}

/// Kind-specific parameters. Unused fields are ignored by other kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Hölder exponent of the graph derivative.
    pub beta0: f64,
    /// Graph amplitude.
    pub amplitude: f64,
    /// Density `1 + c·|y|^α`: the coefficient c.
    pub density_c: f64,
    /// Density `1 + c·|y|^α`: the exponent α.
    pub density_alpha: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            beta0: 0.5,
            amplitude: 0.1,
            density_c: 0.2,
            density_alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub m: usize,
    pub count: usize,
    pub extent: f64,
    pub seed: u64,
    pub params: GeneratorParams,
}

impl GeneratorSpec {
    /// Spec with the kind's natural dimensions: (2,3) for the sphere,
    /// (3,4) for the cone, (2,3) otherwise.
    pub fn new(kind: GeneratorKind, count: usize, extent: f64, seed: u64) -> Self {
        let (n, m) = match kind {
            GeneratorKind::KpCone => (3, 4),
            _ => (2, 3),
        };
        Self {
            kind,
            n,
            m,
            count,
            extent,
            seed,
            params: GeneratorParams::default(),
        }
    }

    pub fn with_dims(mut self, n: usize, m: usize) -> Self {
        self.n = n;
        self.m = m;
        self
    }

    pub fn with_params(mut self, params: GeneratorParams) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < MIN_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "N must be at least {MIN_SAMPLES} (got {})",
                self.count
            )));
        }
        if self.n == 0 || self.n >= self.m {
            return Err(Error::InvalidParameter(format!(
                "need 1 ≤ n < m (got n = {}, m = {})",
                self.n, self.m
            )));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidParameter(format!("extent must be positive (got {})", self.extent)));
        }
        match self.kind {
            GeneratorKind::Sphere if self.n + 1 != self.m => Err(Error::InvalidParameter(format!(
                "sphere needs n = m − 1 (got n = {}, m = {})",
                self.n, self.m
            ))),
            GeneratorKind::KpCone if (self.n, self.m) != (3, 4) => Err(Error::InvalidParameter(format!(
                "kp_cone is fixed to n = 3, m = 4 (got n = {}, m = {})",
                self.n, self.m
            ))),
            GeneratorKind::HolderGraph => {
                let b = self.params.beta0;
                if !(b > 0.0 && b <= 1.0) {
                    return Err(Error::InvalidParameter(format!("β₀ must lie in (0, 1] (got {b})")));
                }
                if !self.params.amplitude.is_finite() || self.params.amplitude < 0.0 {
                    return Err(Error::InvalidParameter("amplitude must be finite and ≥ 0".into()));
                }
                Ok(())
            }
            GeneratorKind::PerturbedDensity => {
                let p = &self.params;
                if !(p.density_alpha > 0.0) || !(p.density_c >= 0.0) || !p.density_c.is_finite() {
                    return Err(Error::InvalidParameter("density needs c ≥ 0 and α > 0".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn meta(&self, truth: GroundTruth) -> CloudMeta {
        let mut params = BTreeMap::new();
        params.insert("n".into(), json!(self.n));
        params.insert("m".into(), json!(self.m));
        params.insert("N".into(), json!(self.count));
        params.insert("extent".into(), json!(self.extent));
        params.insert("seed".into(), json!(self.seed));
        match self.kind {
            GeneratorKind::HolderGraph => {
                params.insert("beta0".into(), json!(self.params.beta0));
                params.insert("amplitude".into(), json!(self.params.amplitude));
            }
            GeneratorKind::PerturbedDensity => {
                params.insert("density".into(), json!("1 + c|y|^alpha"));
                params.insert("c".into(), json!(self.params.density_c));
                params.insert("alpha".into(), json!(self.params.density_alpha));
            }
            _ => {}
        }
        CloudMeta {
            source: self.kind.name().into(),
            params,
            truth,
        }
    }
}

fn expect_kind(spec: &GeneratorSpec, kind: GeneratorKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::InvalidParameter(format!(
            "spec kind is {}, expected {}",
            spec.kind.name(),
            kind.name()
        )));
    }
    spec.validate()
}

/// Dispatches on `spec.kind`.
pub fn generate(spec: &GeneratorSpec) -> Result<WeightedCloud> {
    match spec.kind {
        GeneratorKind::Plane => gen_plane(spec),
        GeneratorKind::Sphere => gen_sphere(spec),
        GeneratorKind::KpCone => gen_kp_cone(spec),
        GeneratorKind::HolderGraph => gen_holder_graph(spec),
        GeneratorKind::PerturbedDensity => gen_perturbed_density(spec),
    }
}

fn embed(p: &[f64], m: usize) -> Vec<f64> {
    let mut v = p.to_vec();
    v.resize(m, 0.0);
    v
}

fn flatten(points: Vec<Vec<f64>>) -> Vec<f64> {
    points.into_iter().flatten().collect()
}

/// Uniform samples on the n-disk of radius `extent` in the coordinate plane
/// `span(e_1..e_n)`.
pub fn gen_plane(spec: &GeneratorSpec) -> Result<WeightedCloud> {
    expect_kind(spec, GeneratorKind::Plane)?;
    plane_cloud(spec)
}

fn plane_cloud(spec: &GeneratorSpec) -> Result<WeightedCloud> {
    let mut rng = seeded_rng(spec.seed);
    let base = ball_points(spec.n, spec.count, spec.extent, &mut rng);
    let mass = unit_ball_volume(spec.n) * spec.extent.powi(spec.n as i32);
    let coords = flatten(base.iter().map(|p| embed(p, spec.m)).collect());
    let truth = GroundTruth {
        tangent_plane: Some(AffinePlane::coordinate(vec![0.0; spec.m], spec.n)?),
        analytic_mass: Some(mass),
        ..GroundTruth::default()
    };
    WeightedCloud::new(
        spec.m,
        spec.n,
        coords,
        vec![mass / spec.count as f64; spec.count],
        spec.meta(truth),
    )
}

/// Uniform samples on the unit sphere `S^n ⊂ ℝ^{n+1}`; `extent` is not used.
pub fn gen_sphere(spec: &GeneratorSpec) -> Result<WeightedCloud> {
    expect_kind(spec, GeneratorKind::Sphere)?;
    let mut rng = seeded_rng(spec.seed);
    let pts = sphere_points(spec.n, spec.count, &mut rng);
    let area = unit_sphere_area(spec.m);
    let truth = GroundTruth {
        analytic_mass: Some(area),
        ..GroundTruth::default()
    };
    WeightedCloud::new(
        spec.m,
        spec.n,
        flatten(pts),
        vec![area / spec.count as f64; spec.count],
        spec.meta(truth),
    )
}

/// The cone `x₄² = x₁² + x₂² + x₃²` in ℝ⁴, truncated to `|x| < extent`.
/// Base points u fill the 3-ball of radius `extent/√2` and each yields the
/// pair `(u, ±|u|)`. An odd N is rounded up so both nappes match.
pub fn gen_kp_cone(spec: &GeneratorSpec) -> Result<WeightedCloud> {
    expect_kind(spec, GeneratorKind::KpCone)?;
    let half = spec.count.div_ceil(2);
    let mut rng = seeded_rng(spec.seed);
    let base = ball_points(3, half, spec.extent / SQRT_2, &mut rng);
    let mut coords = Vec::with_capacity(8 * half);
    for u in &base {
        let h = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        coords.extend_from_slice(&[u[0], u[1], u[2], h]);
        coords.extend_from_slice(&[u[0], u[1], u[2], -h]);
    }
    let mass = unit_ball_volume(3) * spec.extent.powi(3);
    let truth = GroundTruth {
        singular_points: vec![vec![0.0; 4]],
        analytic_mass: Some(mass),
        ..GroundTruth::default()
    };
    WeightedCloud::new(4, 3, coords, vec![mass / (2 * half) as f64; 2 * half], spec.meta(truth))
}

/// Lacunary series `f(u) = Σ_j A·2^{−j(1+β₀)}·sin(2^j⟨u, v_j⟩)·w_j`.
#[derive(Debug, Clone)]
pub struct LacunaryGraph {
    pub n: usize,
    pub m: usize,
    pub beta0: f64,
    pub amplitude: f64,
    pub v: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
}

impl LacunaryGraph {
    pub fn from_spec(spec: &GeneratorSpec) -> Self {
        let p = &spec.params;
        let mut terms = 0;
        while p.amplitude * 2f64.powf(-(terms as f64) * (1.0 + p.beta0)) >= SERIES_CUTOFF {
            terms += 1;
        }
        let mut rng = seeded_rng(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut v = Vec::with_capacity(terms);
        let mut w = Vec::with_capacity(terms);
        for _ in 0..terms {
            v.push(random_unit(spec.n, &mut rng));
            w.push(random_unit(spec.m - spec.n, &mut rng));
        }
        Self {
            n: spec.n,
            m: spec.m,
            beta0: p.beta0,
            amplitude: p.amplitude,
            v,
            w,
        }
    }

    pub fn terms(&self) -> usize {
        self.v.len()
    }

    pub fn value(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m - self.n];
        for (j, (v, w)) in self.v.iter().zip(&self.w).enumerate() {
            let freq = 2f64.powi(j as i32);
            let amp = self.amplitude * freq.powf(-(1.0 + self.beta0));
            let s = (freq * dotp(u, v)).sin();
            for (o, wi) in out.iter_mut().zip(w) {
                *o += amp * s * wi;
            }
        }
        out
    }

    /// Jacobian Df, row-major (m−n)×n.
    pub fn jacobian(&self, u: &[f64]) -> Vec<f64> {
        let k = self.m - self.n;
        let mut jac = vec![0.0; k * self.n];
        for (j, (v, w)) in self.v.iter().zip(&self.w).enumerate() {
            let freq = 2f64.powi(j as i32);
            let amp = self.amplitude * freq.powf(-self.beta0);
            let c = amp * (freq * dotp(u, v)).cos();
            for a in 0..k {
                for b in 0..self.n {
                    jac[a * self.n + b] += c * w[a] * v[b];
                }
            }
        }
        jac
    }

    /// Area element `√det(I + DfᵀDf)`.
    pub fn area_element(&self, u: &[f64]) -> f64 {
        let n = self.n;
        let k = self.m - n;
        let jac = self.jacobian(u);
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for a in 0..k {
                    s += jac[a * n + i] * jac[a * n + j];
                }
                g[i * n + j] = s;
            }
        }
        spd_det(&mut g, n).sqrt()
    }

    pub fn lift(&self, u: &[f64]) -> Vec<f64> {
        let mut p = u.to_vec();
        p.extend(self.value(u));
        p
    }
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Determinant of a symmetric positive definite matrix via Cholesky.
fn spd_det(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        let d = d.sqrt();
        det *= d * d;
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    det
}

/// Graph of a C^{1,β₀} lacunary series over the n-disk of radius `extent`.
pub fn gen_holder_graph(spec: &GeneratorSpec) -> Result<WeightedCloud> {
    expect_kind(spec, GeneratorKind::HolderGraph)?;
    let graph = LacunaryGraph::from_spec(spec);
    let mut rng = seeded_rng(spec.seed);
    let base = ball_points(spec.n, spec.count, spec.extent, &mut rng);
    let cell = unit_ball_volume(spec.n) * spec.extent.powi(spec.n as i32) / spec.count as f64;
    let (pts, weights): (Vec<Vec<f64>>, Vec<f64>) = base
        .par_iter()
        .map(|u| (graph.lift(u), cell * graph.area_element(u)))
        .unzip();
    let mut tangent = vec![vec![0.0; spec.m]; spec.n];
    let jac0 = graph.jacobian(&vec![0.0; spec.n]);
    for (b, t) in tangent.iter_mut().enumerate() {
        t[b] = 1.0;
        for a in 0..spec.m - spec.n {
            t[spec.n + a] = jac0[a * spec.n + b];
        }
    }
    let truth = GroundTruth {
        tangent_plane: Some(AffinePlane::new(vec![0.0; spec.m], tangent)?),
        holder_exponent: Some(spec.params.beta0),
        ..GroundTruth::default()
    };
    WeightedCloud::new(spec.m, spec.n, flatten(pts), weights, spec.meta(truth))
}

/// Plane cloud reweighted by `D(y) = 1 + c·|y|^α`.
pub fn gen_perturbed_density(spec: &GeneratorSpec) -> Result<WeightedCloud> {
    expect_kind(spec, GeneratorKind::PerturbedDensity)?;
    let flat = plane_cloud(spec)?;
    let (c, alpha) = (spec.params.density_c, spec.params.density_alpha);
    let truth = GroundTruth {
        tangent_plane: flat.meta().truth.tangent_plane.clone(),
        density_exponent: Some(alpha),
        ..GroundTruth::default()
    };
    flat.reweight(|y| perturbed_density(y, c, alpha), spec.meta(truth))
}

pub fn perturbed_density(y: &[f64], c: f64, alpha: f64) -> f64 {
    1.0 + c * dotp(y, y).sqrt().powf(alpha)
}
