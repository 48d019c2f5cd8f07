//! Low-discrepancy point sets for the generators.
//!
//! Points are radially stratified: the i-th of N points in the n-ball of
//! radius R sits at radius `R((i+½)/N)^{1/n}`, which makes the in-ball counts
//! of centered balls essentially exact. Directions come from Kronecker
//! sequences; the seed only supplies a Cranley–Patterson shift.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Additive recurrence coefficients `φ_d^{-(j+1)}`, with `φ_d` the unique
/// positive root of `x^{d+1} = x + 1`.
pub fn kronecker_alphas(d: usize) -> Vec<f64> {
    let mut phi = 2.0_f64;
    for _ in 0..200 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    (1..=d).map(|j| phi.powi(-(j as i32)).fract()).collect()
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Deterministic direction generator on `S^{n-1}`.
#[derive(Debug, Clone)]
pub struct Directions {
    n: usize,
    shift: Vec<f64>,
    alphas: Vec<f64>,
}

impl Directions {
    pub fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let coords = match n {
            1 => 0,
            2 => 1,
            3 => 2,
            _ => n + n % 2,
        };
        let alphas = match n {
            2 => vec![GOLDEN],
            3 => vec![0.754_877_666_246_692_7, 0.569_840_290_998_053_2],
            _ => kronecker_alphas(coords),
        };
        let shift = (0..coords).map(|_| rng.gen::<f64>()).collect();
        Self { n, shift, alphas }
    }

    pub fn at(&self, i: usize) -> Vec<f64> {
        let k = i as f64;
        match self.n {
            1 => vec![if i.is_multiple_of(2) { 1.0 } else { -1.0 }],
            2 => {
                let a = 2.0 * PI * frac(self.shift[0] + k * self.alphas[0]);
                vec![a.cos(), a.sin()]
            }
            3 => {
                let z = 1.0 - 2.0 * frac(self.shift[0] + k * self.alphas[0]);
                let a = 2.0 * PI * frac(self.shift[1] + k * self.alphas[1]);
                let s = (1.0 - z * z).max(0.0).sqrt();
                vec![s * a.cos(), s * a.sin(), z]
            }
            n => {
                let u: Vec<f64> = self
                    .shift
                    .iter()
                    .zip(&self.alphas)
                    .map(|(s, a)| frac(s + k * a))
                    .collect();
                let mut g = Vec::with_capacity(n + 1);
                for pair in u.chunks(2) {
                    let rad = (-2.0 * (1.0 - pair[0]).ln()).sqrt();
                    let ang = 2.0 * PI * pair[1];
                    g.push(rad * ang.cos());
                    g.push(rad * ang.sin());
                }
                g.truncate(n);
                let len = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                g.iter().map(|x| x / len).collect()
            }
        }
    }
}

/// N quasi-uniform points in the n-ball of the given radius, in index order.
pub fn ball_points(n: usize, count: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dirs = Directions::new(n, rng);
    let inv = 1.0 / n as f64;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let rho = radius * ((i as f64 + 0.5) / count as f64).powf(inv);
            dirs.at(i).into_iter().map(|d| rho * d).collect()
        })
        .collect()
}

/// N quasi-uniform points on the unit sphere `S^d ⊂ ℝ^{d+1}`.
/// For d = 2 this is the spherical Fibonacci lattice.
pub fn sphere_points(d: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if d == 2 {
        let shift: f64 = rng.gen();
        return (0..count)
            .into_par_iter()
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let a = 2.0 * PI * frac(shift + i as f64 * GOLDEN);
                let s = (1.0 - z * z).max(0.0).sqrt();
                vec![s * a.cos(), s * a.sin(), z]
            })
            .collect();
    }
    let dirs = Directions::new(d + 1, rng);
    (0..count).into_par_iter().map(|i| dirs.at(i)).collect()
}

/// Uniform random unit vector in ℝ^d.
pub fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len2: f64 = v.iter().map(|x| x * x).sum();
        if len2 > 1e-6 && len2 <= 1.0 {
            let len = len2.sqrt();
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}
