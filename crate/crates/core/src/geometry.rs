//! Dimension-generic vector and plane geometry.
//!
//! Points are plain coordinate slices; the ambient dimension is whatever
//! length the caller hands in, checked where two objects meet. The small
//! dense symmetric eigensolver here is a cyclic Jacobi iteration, which is
//! plenty for the `m ≤ 16` matrices produced by moment computations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormality tolerance for plane frames.
pub const FRAME_TOL: f64 = 1e-12;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Orthonormalizes `vectors` in place by twice-iterated modified Gram–Schmidt.
/// Fails if any vector loses more than `1 - 1e-10` of its norm.
fn gram_schmidt(vectors: &mut [Vec<f64>]) -> Result<()> {
    for i in 0..vectors.len() {
        let original = norm(&vectors[i]);
        if !(original > 0.0) || !original.is_finite() {
            return Err(Error::RankDeficient);
        }
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = vectors.split_at_mut(i);
                let c = dot(&tail[0], &head[j]);
                for (v, q) in tail[0].iter_mut().zip(&head[j]) {
                    *v -= c * q;
                }
            }
        }
        let len = norm(&vectors[i]);
        if len < 1e-10 * original {
            return Err(Error::RankDeficient);
        }
        for v in vectors[i].iter_mut() {
            *v /= len;
        }
    }
    Ok(())
}

/// Completes an orthonormal family to an orthonormal basis of ℝ^m and
/// returns only the added vectors.
pub fn orthonormal_complement(frame: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = frame.to_vec();
    let mut added = Vec::with_capacity(m.saturating_sub(frame.len()));
    while basis.len() < m {
        // Pick the coordinate axis with the largest residual.
        let mut best: Option<(f64, Vec<f64>)> = None;
        for axis in 0..m {
            let mut v = vec![0.0; m];
            v[axis] = 1.0;
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&v, q);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= c * qi;
                    }
                }
            }
            let len = norm(&v);
            if best.as_ref().is_none_or(|(l, _)| len > *l) {
                best = Some((len, v));
            }
        }
        let (len, mut v) = best.expect("m > 0");
        for vi in v.iter_mut() {
            *vi /= len;
        }
        basis.push(v.clone());
        added.push(v);
    }
    added
}

/// An affine n-plane: a base point and an orthonormal frame of directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePlane {
    base: Vec<f64>,
    frame: Vec<Vec<f64>>,
}

impl AffinePlane {
    /// Builds a plane, re-orthonormalizing `directions`. Rank-deficient
    /// input is an error.
    pub fn new(base: Vec<f64>, directions: Vec<Vec<f64>>) -> Result<Self> {
        let m = base.len();
        if directions.is_empty() || directions.len() >= m {
            return Err(Error::InvalidParameter(format!(
                "plane dimension must satisfy 1 ≤ n < m (n = {}, m = {m})",
                directions.len()
            )));
        }
        for d in &directions {
            check_dim(m, d.len())?;
        }
        if base.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite plane base".into()));
        }
        let mut frame = directions;
        gram_schmidt(&mut frame)?;
        Ok(Self { base, frame })
    }

    /// The n-plane spanned by the first `n` coordinate axes, through `base`.
    pub fn coordinate(base: Vec<f64>, n: usize) -> Result<Self> {
        let m = base.len();
        let directions = (0..n)
            .map(|i| {
                let mut e = vec![0.0; m];
                e[i] = 1.0;
                e
            })
            .collect();
        Self::new(base, directions)
    }

    /// The plane through `base` orthogonal to the given normal vectors.
    pub fn from_normals(base: Vec<f64>, normals: &[Vec<f64>]) -> Result<Self> {
        let m = base.len();
        let mut normals = normals.to_vec();
        for v in &normals {
            check_dim(m, v.len())?;
        }
        gram_schmidt(&mut normals)?;
        let frame = orthonormal_complement(&normals, m);
        Self::new(base, frame)
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn frame(&self) -> &[Vec<f64>] {
        &self.frame
    }

    /// Intrinsic dimension n.
    pub fn dim(&self) -> usize {
        self.frame.len()
    }

    /// Ambient dimension m.
    pub fn ambient_dim(&self) -> usize {
        self.base.len()
    }

    /// Orthonormal basis of the normal space.
    pub fn normals(&self) -> Vec<Vec<f64>> {
        orthonormal_complement(&self.frame, self.ambient_dim())
    }

    /// Orthogonal projector onto the direction space, row-major m×m.
    pub fn projector(&self) -> Vec<f64> {
        let m = self.ambient_dim();
        let mut p = vec![0.0; m * m];
        for f in &self.frame {
            for i in 0..m {
                for j in 0..m {
                    p[i * m + j] += f[i] * f[j];
                }
            }
        }
        p
    }

    /// Same direction space, moved to a new base point.
    pub fn with_base(&self, base: Vec<f64>) -> Result<Self> {
        check_dim(self.ambient_dim(), base.len())?;
        Ok(Self {
            base,
            frame: self.frame.clone(),
        })
    }

    /// Maps `base + Σ t_j frame_j`.
    pub fn point_at(&self, coords: &[f64]) -> Vec<f64> {
        let mut p = self.base.clone();
        for (t, f) in coords.iter().zip(&self.frame) {
            for (pi, fi) in p.iter_mut().zip(f) {
                *pi += t * fi;
            }
        }
        p
    }
}

/// Euclidean distance from `x` to the affine plane.
pub fn plane_distance(x: &[f64], plane: &AffinePlane) -> Result<f64> {
    check_dim(plane.ambient_dim(), x.len())?;
    let mut r = sub(x, plane.base());
    for f in plane.frame() {
        let c = dot(&r, f);
        for (ri, fi) in r.iter_mut().zip(f) {
            *ri -= c * fi;
        }
    }
    Ok(norm(&r))
}

/// One-sided sup distance `sup_{y∈from} dist(y, to)`.
pub fn directed_hausdorff(from: &[Vec<f64>], to: &[Vec<f64>]) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptySet);
    }
    let m = from[0].len();
    let mut sup = 0.0_f64;
    for y in from {
        check_dim(m, y.len())?;
        let mut best = f64::INFINITY;
        for z in to {
            check_dim(m, z.len())?;
            best = best.min(dist2(y, z));
        }
        sup = sup.max(best);
    }
    Ok(sup.sqrt())
}

/// Bilateral distance used by the flatness functional θ: the SUM of the two
/// one-sided sups.
pub fn hausdorff_distance(e: &[Vec<f64>], f: &[Vec<f64>]) -> Result<f64> {
    Ok(directed_hausdorff(e, f)? + directed_hausdorff(f, e)?)
}

/// The classical Hausdorff distance (max of the two one-sided sups).
pub fn hausdorff_max(e: &[Vec<f64>], f: &[Vec<f64>]) -> Result<f64> {
    Ok(directed_hausdorff(e, f)?.max(directed_hausdorff(f, e)?))
}

/// Operator-norm distance between the direction projectors of two planes.
pub fn grassmann_gap(a: &AffinePlane, b: &AffinePlane) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::PlaneDimension(a.dim(), b.dim()));
    }
    check_dim(a.ambient_dim(), b.ambient_dim())?;
    let pa = a.projector();
    let pb = b.projector();
    let diff: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
    let form = sym_eigen(&diff, a.ambient_dim())?;
    let gap = form
        .eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs()));
    Ok(gap.clamp(0.0, 1.0))
}

/// A symmetric m×m matrix together with its ascending eigen-decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricForm {
    dim: usize,
    entries: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl SymmetricForm {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Eigenvalues λ_1 ≤ … ≤ λ_m.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unit eigenvectors, `eigenvectors()[i]` pairs with `eigenvalues()[i]`.
    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entry(i, i)).sum()
    }

    /// Evaluates the quadratic form zᵀMz.
    pub fn quadratic(&self, z: &[f64]) -> f64 {
        let m = self.dim;
        let mut acc = 0.0;
        for i in 0..m {
            let row = &self.entries[i * m..(i + 1) * m];
            acc += z[i] * dot(row, z);
        }
        acc
    }

    /// Frobenius norm of the matrix.
    pub fn frobenius(&self) -> f64 {
        norm(&self.entries)
    }
}

/// Eigen-decomposes a symmetric matrix (row-major, `m×m`) by cyclic Jacobi
/// rotations. Eigenvalues ascend; each eigenvector has its first
/// non-negligible component positive.
pub fn sym_eigen(matrix: &[f64], m: usize) -> Result<SymmetricForm> {
    check_dim(m * m, matrix.len())?;
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite matrix entry".into()));
    }
    let scale = norm(matrix);
    let mut asym = 0.0_f64;
    for i in 0..m {
        for j in (i + 1)..m {
            asym = asym.max((matrix[i * m + j] - matrix[j * m + i]).abs());
        }
    }
    if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    // Symmetrize exactly so the stored form is symmetric by construction.
    let mut entries = matrix.to_vec();
    for i in 0..m {
        for j in (i + 1)..m {
            let avg = 0.5 * (matrix[i * m + j] + matrix[j * m + i]);
            entries[i * m + j] = avg;
            entries[j * m + i] = avg;
        }
    }

    let mut a = entries.clone();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let tol = 1e-12 * scale;
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j] * a[i * m + j])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[i * m + i].total_cmp(&a[j * m + j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * m + i]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| {
            let mut e: Vec<f64> = (0..m).map(|row| v[row * m + col]).collect();
            let len = norm(&e);
            for x in e.iter_mut() {
                *x /= len;
            }
            if let Some(first) = e.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    for x in e.iter_mut() {
                        *x = -*x;
                    }
                }
            }
            e
        })
        .collect();

    Ok(SymmetricForm {
        dim: m,
        entries,
        eigenvalues,
        eigenvectors,
    })
}

/// Volume of the unit n-ball, π^{n/2}/Γ(n/2+1).
pub fn unit_ball_volume(n: usize) -> f64 {
    // ω_0 = 1, ω_1 = 2, ω_n = (2π/n) ω_{n-2}
    let mut even = 1.0;
    let mut odd = 2.0;
    if n == 0 {
        return even;
    }
    if n == 1 {
        return odd;
    }
    let mut k = if n.is_multiple_of(2) { 2 } else { 3 };
    while k <= n {
        if k % 2 == 0 {
            even *= 2.0 * std::f64::consts::PI / k as f64;
        } else {
            odd *= 2.0 * std::f64::consts::PI / k as f64;
        }
        k += 2;
    }
    if n.is_multiple_of(2) {
        even
    } else {
        odd
    }
}

/// Surface area of the unit sphere S^{d-1} ⊂ ℝ^d, d·ω_d.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}
