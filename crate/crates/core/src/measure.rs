//! Weighted point clouds as discrete Radon measures.
//!
//! A [`WeightedCloud`] stores its points flat (`N·m` coordinates) next to
//! strictly positive weights. Ball queries go through a uniform grid
//! ([`GridIndex`]) built lazily on first use; every query returns indices in
//! ascending order and masses are summed in that order, so indexed and
//! linear-scan answers agree bit for bit.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist2, AffinePlane};

/// Open ball `B(center, radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    #[inline]
    pub fn contains(&self, p: &[f64]) -> bool {
        dist2(p, &self.center) < self.radius * self.radius
    }
}

/// Known ground truth recorded by generators for downstream scoring.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Tangent plane at the generator's reference point (usually the origin).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangent_plane: Option<AffinePlane>,
    /// Known singular points of the support.
    #[serde(default)]
    pub singular_points: Vec<Vec<f64>>,
    /// Hölder exponent of the density perturbation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_exponent: Option<f64>,
    /// Hölder exponent of the derivative of a C^{1,β} graph.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holder_exponent: Option<f64>,
    /// Exact n-dimensional mass of the sampled surface, when known in closed form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_mass: Option<f64>,
}

/// Provenance of a cloud: generator name and parameters, or the input file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CloudMeta {
    pub source: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub truth: GroundTruth,
}

/// Finite weighted point set in ℝ^m carrying an intrinsic dimension label n.
#[derive(Debug, Serialize, Deserialize)]
pub struct WeightedCloud {
    dim: usize,
    n: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    meta: CloudMeta,
    #[serde(skip)]
    index: OnceLock<GridIndex>,
}

impl Clone for WeightedCloud {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            n: self.n,
            coords: self.coords.clone(),
            weights: self.weights.clone(),
            meta: self.meta.clone(),
            index: OnceLock::new(),
        }
    }
}

impl PartialEq for WeightedCloud {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.n == other.n
            && self.coords == other.coords
            && self.weights == other.weights
            && self.meta == other.meta
    }
}

impl WeightedCloud {
    /// Builds a cloud from flat coordinates. Validates dimensions, finiteness
    /// and positivity of weights.
    pub fn new(dim: usize, n: usize, coords: Vec<f64>, weights: Vec<f64>, meta: CloudMeta) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidData("ambient dimension must be ≥ 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidData("cloud needs at least one point".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * weights.len(),
                got: coords.len(),
            });
        }
        if n == 0 || n >= dim {
            return Err(Error::InvalidData(format!(
                "intrinsic dimension must satisfy 1 ≤ n < m (n = {n}, m = {dim})"
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidData(format!(
                "weight at row {i} is not positive: {}",
                weights[i]
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidData("non-finite coordinate".into()));
        }
        Ok(Self {
            dim,
            n,
            coords,
            weights,
            meta,
            index: OnceLock::new(),
        })
    }

    pub fn from_points(n: usize, points: &[Vec<f64>], weights: Vec<f64>, meta: CloudMeta) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, n, coords, weights, meta)
    }

    /// Union of two clouds with the same dimensions.
    pub fn concat(&self, other: &WeightedCloud, meta: CloudMeta) -> Result<Self> {
        if self.dim != other.dim || self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self::new(self.dim, self.n, coords, weights, meta)
    }

    /// Applies `p ↦ f(p)` to every point, keeping weights.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>, meta: CloudMeta) -> Result<Self> {
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.points() {
            let q = f(p);
            if q.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: q.len(),
                });
            }
            coords.extend(q);
        }
        Self::new(self.dim, self.n, coords, self.weights.clone(), meta)
    }

    /// Multiplies every weight by `f(point)`.
    pub fn reweight(&self, mut f: impl FnMut(&[f64]) -> f64, meta: CloudMeta) -> Result<Self> {
        let weights = self
            .points()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .collect();
        Self::new(self.dim, self.n, self.coords.clone(), weights, meta)
    }

    /// Ambient dimension m.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Intrinsic dimension label n.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn meta(&self) -> &CloudMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut CloudMeta {
        &mut self.meta
    }

    /// Sum of all weights, in index order.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The grid index, built on first use.
    pub fn index(&self) -> &GridIndex {
        self.index.get_or_init(|| GridIndex::build(self))
    }

    /// Indices of points inside the open ball, ascending.
    pub fn ball_indices(&self, ball: &Ball) -> Vec<usize> {
        self.index().query(self, ball)
    }

    /// `μ(B)`: weights of points strictly inside the ball, summed in index order.
    pub fn ball_mass(&self, ball: &Ball) -> f64 {
        self.ball_indices(ball).iter().map(|&i| self.weights[i]).sum()
    }

    /// Number of samples inside the ball.
    pub fn ball_count(&self, ball: &Ball) -> usize {
        self.ball_indices(ball).len()
    }

    /// The sample points representing `Σ ∩ B`, in index order.
    pub fn support_in_ball(&self, ball: &Ball) -> Vec<Vec<f64>> {
        self.ball_indices(ball)
            .into_iter()
            .map(|i| self.point(i).to_vec())
            .collect()
    }

    /// Reference linear scan; identical results to the indexed path.
    pub fn ball_indices_scan(&self, ball: &Ball) -> Vec<usize> {
        self.points()
            .enumerate()
            .filter(|(_, p)| ball.contains(p))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn ball_mass_scan(&self, ball: &Ball) -> f64 {
        self.ball_indices_scan(ball)
            .iter()
            .map(|&i| self.weights[i])
            .sum()
    }

    /// Rescaled, renormalized copy `E ↦ μ(rE + x)/μ(B(x,r))`: points map to
    /// `(p − x)/r` and weights are divided by `μ(B(x,r))`.
    pub fn blow_up(&self, center: &[f64], radius: f64) -> Result<Self> {
        if center.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: center.len(),
            });
        }
        let ball = Ball::new(center.to_vec(), radius)?;
        let mass = self.ball_mass(&ball);
        if !(mass > 0.0) {
            return Err(Error::NotInSupport { radius });
        }
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.points() {
            coords.extend(p.iter().zip(center).map(|(a, c)| (a - c) / radius));
        }
        let weights = self.weights.iter().map(|w| w / mass).collect();
        let mut params = BTreeMap::new();
        params.insert("parent".into(), serde_json::Value::String(self.meta.source.clone()));
        params.insert("center".into(), serde_json::json!(center));
        params.insert("radius".into(), serde_json::json!(radius));
        let meta = CloudMeta {
            source: "blow_up".into(),
            params,
            truth: GroundTruth::default(),
        };
        Self::new(self.dim, self.n, coords, weights, meta)
    }
}

/// Uniform grid over ℝ^m with cell size tied to the median nearest-neighbor
/// spacing of the cloud.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell: f64,
    dim: usize,
    cells: HashMap<Vec<i64>, Vec<u32>>,
    keys: Vec<Vec<i64>>,
}

/// Cell size as a multiple of the median nearest-neighbor distance.
const CELL_FACTOR: f64 = 8.0;
const SPACING_SAMPLES: usize = 256;

impl GridIndex {
    pub fn build(cloud: &WeightedCloud) -> Self {
        let n = cloud.n().max(1) as f64;
        let count = cloud.len() as f64;
        // Provisional spacing from the bounding box, refined below.
        let (lo, hi) = bounding_box(cloud);
        let mut extents: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
        extents.sort_by(|a, b| b.total_cmp(a));
        let vol: f64 = extents.iter().take(cloud.n()).map(|e| e.max(1e-300)).product();
        let provisional = (vol / count).powf(1.0 / n).max(1e-12);

        let coarse = Self::with_cell(cloud, provisional * CELL_FACTOR);
        let spacing = coarse.median_nn_spacing(cloud).unwrap_or(provisional);
        let cell = (spacing * CELL_FACTOR).max(1e-12);
        if (cell / coarse.cell - 1.0).abs() < 0.25 {
            coarse
        } else {
            Self::with_cell(cloud, cell)
        }
    }

    pub fn with_cell(cloud: &WeightedCloud, cell: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for (i, p) in cloud.points().enumerate() {
            cells.entry(key_of(p, cell)).or_default().push(i as u32);
        }
        let mut keys: Vec<Vec<i64>> = cells.keys().cloned().collect();
        keys.sort();
        Self {
            cell,
            dim: cloud.dim(),
            cells,
            keys,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn occupied_cells(&self) -> usize {
        self.keys.len()
    }

    fn median_nn_spacing(&self, cloud: &WeightedCloud) -> Option<f64> {
        if cloud.len() < 2 {
            return None;
        }
        let stride = (cloud.len() / SPACING_SAMPLES).max(1);
        let mut nn: Vec<f64> = (0..cloud.len())
            .step_by(stride)
            .take(SPACING_SAMPLES)
            .filter_map(|i| self.nearest_other(cloud, i))
            .collect();
        if nn.is_empty() {
            return None;
        }
        nn.sort_by(f64::total_cmp);
        let med = nn[nn.len() / 2];
        (med > 0.0).then_some(med)
    }

    fn nearest_other(&self, cloud: &WeightedCloud, i: usize) -> Option<f64> {
        let p = cloud.point(i);
        let mut r = self.cell;
        for _ in 0..40 {
            let ball = Ball {
                center: p.to_vec(),
                radius: r,
            };
            let best = self
                .query(cloud, &ball)
                .into_iter()
                .filter(|&j| j != i)
                .map(|j| dist2(p, cloud.point(j)))
                .filter(|d| *d > 0.0)
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() {
                return Some(best.sqrt());
            }
            r *= 2.0;
        }
        None
    }

    /// Ascending indices of cloud points inside the open ball.
    pub fn query(&self, cloud: &WeightedCloud, ball: &Ball) -> Vec<usize> {
        let c = &ball.center;
        let r = ball.radius;
        let r2 = r * r;
        let lo: Vec<i64> = c.iter().map(|x| ((x - r) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = c.iter().map(|x| ((x + r) / self.cell).floor() as i64).collect();
        let box_cells: f64 = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as f64).product();

        let mut out = Vec::new();
        let mut visit = |ids: &[u32]| {
            for &id in ids {
                let id = id as usize;
                if dist2(cloud.point(id), c) < r2 {
                    out.push(id);
                }
            }
        };

        if box_cells <= self.keys.len() as f64 {
            let mut key = lo.clone();
            'outer: loop {
                if let Some(ids) = self.cells.get(&key) {
                    if self.cell_min_dist2(&key, c) < r2 {
                        visit(ids);
                    }
                }
                for d in 0..self.dim {
                    key[d] += 1;
                    if key[d] <= hi[d] {
                        continue 'outer;
                    }
                    key[d] = lo[d];
                }
                break;
            }
        } else {
            for key in &self.keys {
                if key.iter().zip(&lo).zip(&hi).any(|((k, a), b)| k < a || k > b) {
                    continue;
                }
                if self.cell_min_dist2(key, c) < r2 {
                    visit(&self.cells[key]);
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn cell_min_dist2(&self, key: &[i64], c: &[f64]) -> f64 {
        key.iter()
            .zip(c)
            .map(|(&k, &x)| {
                let a = k as f64 * self.cell;
                let b = a + self.cell;
                let d = if x < a {
                    a - x
                } else if x > b {
                    x - b
                } else {
                    0.0
                };
                d * d
            })
            .sum()
    }
}

fn key_of(p: &[f64], cell: f64) -> Vec<i64> {
    p.iter().map(|x| (x / cell).floor() as i64).collect()
}

fn bounding_box(cloud: &WeightedCloud) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; cloud.dim()];
    let mut hi = vec![f64::NEG_INFINITY; cloud.dim()];
    for p in cloud.points() {
        for d in 0..p.len() {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_cloud(seed: u64, len: usize, dim: usize) -> WeightedCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..len * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights = (0..len).map(|_| rng.gen_range(0.1..2.0)).collect();
        WeightedCloud::new(dim, 1, coords, weights, CloudMeta::default()).unwrap()
    }

    #[test]
    fn single_point_masses() {
        let c = WeightedCloud::new(3, 2, vec![0.0; 3], vec![2.0], CloudMeta::default()).unwrap();
        assert_eq!(c.ball_mass(&Ball::new(vec![0.0; 3], 1.0).unwrap()), 2.0);
        assert_eq!(c.ball_mass(&Ball::new(vec![5.0, 0.0, 0.0], 1.0).unwrap()), 0.0);
    }

    #[test]
    fn support_in_ball_examples() {
        let c = WeightedCloud::new(2, 1, vec![-1.0, 0.0, 1.0, 0.0], vec![1.0, 1.0], CloudMeta::default())
            .unwrap();
        assert!(c.support_in_ball(&Ball::new(vec![10.0, 10.0], 0.5).unwrap()).is_empty());
        assert_eq!(c.support_in_ball(&Ball::new(vec![0.0, 0.0], 5.0).unwrap()).len(), 2);
        let half = c.support_in_ball(&Ball::new(vec![0.9, 0.0], 0.5).unwrap());
        assert_eq!(half, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn open_ball_excludes_boundary() {
        let c = WeightedCloud::new(2, 1, vec![1.0, 0.0], vec![1.0], CloudMeta::default()).unwrap();
        assert_eq!(c.ball_mass(&Ball::new(vec![0.0, 0.0], 1.0).unwrap()), 0.0);
    }

    #[test]
    fn invalid_clouds_rejected() {
        assert!(WeightedCloud::new(2, 1, vec![0.0, 0.0], vec![0.0], CloudMeta::default()).is_err());
        assert!(WeightedCloud::new(2, 1, vec![0.0], vec![1.0], CloudMeta::default()).is_err());
        assert!(WeightedCloud::new(2, 1, vec![], vec![], CloudMeta::default()).is_err());
        assert!(WeightedCloud::new(2, 2, vec![0.0, 0.0], vec![1.0], CloudMeta::default()).is_err());
    }

    #[test]
    fn index_matches_scan_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..1000 {
            let dim = 2 + trial % 3;
            let cloud = random_cloud(trial as u64, 50 + trial % 200, dim);
            let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let radius = rng.gen_range(0.01..2.0);
            let ball = Ball::new(center, radius).unwrap();
            assert_eq!(cloud.ball_indices(&ball), cloud.ball_indices_scan(&ball));
            assert_eq!(cloud.ball_mass(&ball).to_bits(), cloud.ball_mass_scan(&ball).to_bits());
        }
    }

    #[test]
    fn nested_balls_monotone() {
        let cloud = random_cloud(3, 2000, 3);
        let mut prev = 0.0;
        for k in 1..30 {
            let m = cloud.ball_mass(&Ball::new(vec![0.1, 0.0, -0.2], 0.05 * k as f64).unwrap());
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn blow_up_normalizes_and_composes() {
        let cloud = random_cloud(4, 3000, 3);
        let x = cloud.point(17).to_vec();
        let b = cloud.blow_up(&x, 0.5).unwrap();
        let unit = b.ball_mass(&Ball::new(vec![0.0; 3], 1.0).unwrap());
        assert!((unit - 1.0).abs() < 1e-12);

        let twice = b.blow_up(&[0.0; 3], 0.4).unwrap();
        let once = cloud.blow_up(&x, 0.2).unwrap();
        for (p, q) in twice.points().zip(once.points()) {
            for (a, c) in p.iter().zip(q) {
                assert!((a - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blow_up_outside_support_fails() {
        let cloud = random_cloud(5, 100, 2);
        let err = cloud.blow_up(&[10.0, 10.0], 0.1).unwrap_err();
        assert_eq!(err.to_string(), "center not in support at this scale (r = 0.1)");
    }
}
