#![allow(dead_code)]

use flatmeasure::generators::{generate, GeneratorKind, GeneratorSpec};
use flatmeasure::geometry::{dot, norm, unit_ball_volume};
use flatmeasure::{CloudMeta, WeightedCloud};

/// Three cone points on the upper nappe with |x| = 0.5, 0.55, 0.6.
pub fn cone_smooth_points() -> Vec<Vec<f64>> {
    let dirs = [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.577_350_269_189_625_7; 3]];
    [0.5, 0.55, 0.6]
        .iter()
        .zip(dirs)
        .map(|(s, u)| {
            let h = s / 2f64.sqrt();
            vec![h * u[0], h * u[1], h * u[2], h]
        })
        .collect()
}

/// A fixed generic rotation of ℝ³ (Gram–Schmidt on three fixed vectors).
pub fn rotation3() -> [[f64; 3]; 3] {
    orthonormalize([[0.9, 0.3, -0.2], [0.1, 0.8, 0.5], [-0.3, 0.2, 0.9]])
}

/// Gram–Schmidt on three linearly independent rows.
pub fn orthonormalize(seeds: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for s in seeds {
        let mut v = s.to_vec();
        for r in &rows {
            let c = dot(&v, r);
            for (a, b) in v.iter_mut().zip(r) {
                *a -= c * b;
            }
        }
        let l = norm(&v);
        rows.push(v.iter().map(|a| a / l).collect());
    }
    [
        [rows[0][0], rows[0][1], rows[0][2]],
        [rows[1][0], rows[1][1], rows[1][2]],
        [rows[2][0], rows[2][1], rows[2][2]],
    ]
}

pub fn rotate(rot: &[[f64; 3]; 3], p: &[f64]) -> Vec<f64> {
    rot.iter().map(|row| dot(row, p)).collect()
}

pub const OFFSET_HEIGHT: f64 = 0.2;
pub const OFFSET_WEIGHT: f64 = 10.0;
pub const SHIFT: [f64; 3] = [0.3, -0.2, 0.5];

/// Unit-density plane disk plus a parallel copy at height 0.2 carrying ten
/// times the weight, rotated and shifted. Returns the cloud and the image
/// of the origin.
pub fn two_planes(count: usize, seed: u64) -> (WeightedCloud, Vec<f64>) {
    let base = generate(&GeneratorSpec::new(GeneratorKind::Plane, count, 1.0, seed)).unwrap();
    let up = base
        .map_points(|p| vec![p[0], p[1], p[2] + OFFSET_HEIGHT], CloudMeta::default())
        .unwrap()
        .reweight(|_| OFFSET_WEIGHT, CloudMeta::default())
        .unwrap();
    let both = base.concat(&up, CloudMeta::default()).unwrap();
    let rot = rotation3();
    let moved = both
        .map_points(
            |p| rotate(&rot, p).iter().zip(SHIFT).map(|(a, s)| a + s).collect(),
            CloudMeta::default(),
        )
        .unwrap();
    (moved, SHIFT.to_vec())
}

/// b of [`two_planes`] at the image of the origin, by midpoint polar
/// quadrature in the unrotated frame, then rotated.
pub fn two_planes_b(r: f64) -> Vec<f64> {
    let steps = 2000;
    let layer = |h: f64, weight: f64| -> f64 {
        let rho = (r * r - h * h).max(0.0).sqrt();
        let dr = rho / steps as f64;
        let mut s = 0.0;
        for i in 0..steps {
            let q = (i as f64 + 0.5) * dr;
            s += (r * r - q * q - h * h) * 2.0 * std::f64::consts::PI * q * dr;
        }
        weight * h * s
    };
    let c = 4.0 / (2.0 * unit_ball_volume(2) * r.powi(4));
    let local = [0.0, 0.0, c * (layer(0.0, 1.0) + layer(OFFSET_HEIGHT, OFFSET_WEIGHT))];
    rotate(&rotation3(), &local)
}

pub fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0).acos().to_degrees()
}
