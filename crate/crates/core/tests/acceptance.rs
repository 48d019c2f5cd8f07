//! Acceptance run: one line per criterion. Criteria listed in
//! `KNOWN_FAILURES` are reported but do not fail the run; any other failure,
//! or a known failure that starts passing, does.

mod common;

use std::time::Instant;

use rayon::prelude::*;

use flatmeasure::cascade::{check_schedule, decay_exponent, make_schedule, predicted_exponent, run_cascade, Outcome, Route};
use flatmeasure::doubling::{density_ratio, doubling_profile, doubling_ratio, reliable_radii, telescope_bound, MIN_BALL_SAMPLES};
use flatmeasure::fit::{bootstrap_slope, radius_grid};
use flatmeasure::flatness::{
    beta2_smooth, beta_inf, classify_points, fit_beta_exponent, flatness_profile, profile_json, theta, uniform_profile,
    PointLabel, DEFAULT_RESOLUTION,
};
use flatmeasure::generators::{generate, GeneratorKind, GeneratorParams, GeneratorSpec, LacunaryGraph};
use flatmeasure::geometry::{dist2, grassmann_gap, norm};
use flatmeasure::io::{load_cloud, save_cloud, CloudFormat};
use flatmeasure::moments::{moment_form, q_tilde_identity, trace_deviation};
use flatmeasure::{Ball, WeightedCloud};

use common::{angle_deg, cone_smooth_points, two_planes, two_planes_b};

const SEED: u64 = 7;
const KNOWN_FAILURES: [usize; 3] = [1, 5, 7];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn cone(count: usize) -> WeightedCloud {
    generate(&GeneratorSpec::new(GeneratorKind::KpCone, count, 1.0, SEED)).unwrap()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let c = cone(1_000_000);
    let mut centers = vec![vec![0.0; 4]];
    centers.extend(cone_smooth_points());
    let mut worst = 0.0_f64;
    let mut bad = Vec::new();
    for (i, x) in centers.iter().enumerate() {
        for r in [0.05, 0.1, 0.2, 0.4] {
            let d = (density_ratio(&c, x, r).unwrap() - 1.0).abs();
            worst = worst.max(d);
            if d > 0.02 {
                bad.push(format!("x{i}@r={r}: {:.2}%", 100.0 * d));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        bad.is_empty() && secs < 120.0,
        format!("max |ratio-1| = {:.2}% in {secs:.1}s; outside 2%: {bad:?}", 100.0 * worst),
    )
}

fn criterion_2() -> Verdict {
    let c = cone(1_000_000);
    let p = moment_form(&c, &[0.0; 4], 0.3).unwrap();
    let lam = p.q.eigenvalues();
    let want = [0.5, 0.5, 0.5, 1.5];
    let err = lam.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    verdict(err <= 0.05, format!("eigenvalues {lam:.4?}, max error {err:.4}"))
}

fn criterion_3() -> Verdict {
    let c = cone(4_000_000);
    let mut centers = vec![vec![0.0; 4]];
    centers.extend(cone_smooth_points());
    let radii = radius_grid(0.125, 0.04);
    let report = classify_points(&c, &centers, 0.3, &radii, DEFAULT_RESOLUTION).unwrap();
    let vertex = &report.points[0];
    let vertex_ok = vertex.label == PointLabel::Singular && vertex.thetas.iter().all(|t| *t >= 0.3);
    let smooth_ok = report.points[1..].iter().all(|p| p.label == PointLabel::Regular);
    let summary: Vec<String> = report
        .points
        .iter()
        .map(|p| {
            let lo = p.thetas.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = p.thetas.iter().copied().fold(0.0, f64::max);
            format!("{:?} θ∈[{lo:.3},{hi:.3}] ({} radii)", p.label, p.radii.len())
        })
        .collect();
    verdict(vertex_ok && smooth_ok, summary.join("; "))
}

fn criterion_4() -> Verdict {
    let p = generate(&GeneratorSpec::new(GeneratorKind::Plane, 100_000, 1.0, SEED)).unwrap();
    let x = [0.0; 3];
    let r = 0.5;
    let count = p.ball_count(&Ball::new(x.to_vec(), r).unwrap()) as f64;
    let mut notes = Vec::new();
    let mut ok = true;
    for t in [0.5, 0.75, 1.0] {
        let q: f64 = t * t;
        let sigma = (q * (1.0 - q) / count).sqrt();
        let v = doubling_ratio(&p, &x, t, r).unwrap();
        ok &= v.abs() <= 3.0 * sigma;
        notes.push(format!("R_{t}={v:.2e}(3σ={:.1e})", 3.0 * sigma));
    }
    let pair = moment_form(&p, &x, r).unwrap();
    let idx = p.ball_indices(&Ball::new(x.to_vec(), r).unwrap());
    let c = 4.0 / (2.0 * std::f64::consts::PI * r.powi(4));
    let var: f64 = idx
        .iter()
        .map(|&i| {
            let d2 = dist2(p.point(i), &x);
            ((r * r - d2) * p.weight(i)).powi(2) * d2
        })
        .sum();
    let sigma_b = c * var.sqrt();
    ok &= pair.b_norm() <= 3.0 * sigma_b;
    notes.push(format!("|b|={:.2e}(3σ={:.1e})", pair.b_norm(), 3.0 * sigma_b));
    let lam = pair.q.eigenvalues();
    let lam_err = lam.iter().zip([0.0, 1.0, 1.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= lam_err <= 0.02;
    notes.push(format!("λ err {lam_err:.1e}"));
    let b = beta_inf(&p, &x, r).unwrap().value;
    let th = theta(&p, &x, r, DEFAULT_RESOLUTION).unwrap().value;
    let b2 = beta2_smooth(&p, &x, r).unwrap().value;
    ok &= b <= 0.02 && th <= 0.02 && b2 <= 0.02;
    notes.push(format!("β={b:.1e} θ={th:.4} β̃₂={b2:.1e}"));
    verdict(ok, notes.join(" "))
}

fn criterion_5() -> Verdict {
    let s = generate(&GeneratorSpec::new(GeneratorKind::Sphere, 1_000_000, 1.0, SEED)).unwrap();
    let x = [0.0, 0.0, 1.0];
    let radii = radius_grid(1.0, 0.05);
    let worst = radii
        .iter()
        .map(|&r| (density_ratio(&s, &x, r).unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    let devs: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| (r, trace_deviation(&moment_form(&s, &x, r).unwrap()).abs()))
        .filter(|(_, d)| *d > 0.0)
        .collect();
    let lx: Vec<f64> = devs.iter().map(|(r, _)| r.ln()).collect();
    let ly: Vec<f64> = devs.iter().map(|(_, d)| d.ln()).collect();
    let slope = bootstrap_slope(&lx, &ly, SEED).map(|f| f.slope).ok();
    let slope_ok = slope.is_some_and(|v| (v - 2.0).abs() <= 0.3);
    let max_dev = devs.iter().map(|d| d.1).fold(0.0, f64::max);
    let lam1 = moment_form(&s, &x, 0.5).unwrap().q.eigenvalues()[0] / 0.25;
    verdict(
        worst <= 0.02 && slope_ok,
        format!(
            "max |ratio-1| = {:.3}%; trace-deviation slope {slope:?} (|Tr Q - n| ≤ {max_dev:.1e}); λ₁/r² at r=0.5: {lam1:.4}",
            100.0 * worst
        ),
    )
}

fn criterion_6() -> Verdict {
    let spec = GeneratorSpec::new(GeneratorKind::HolderGraph, 500_000, 1.0, SEED).with_params(GeneratorParams {
        beta0: 0.5,
        amplitude: 0.1,
        ..GeneratorParams::default()
    });
    let h = generate(&spec).unwrap();
    let graph = LacunaryGraph::from_spec(&spec);
    let centers: Vec<Vec<f64>> = (0..16)
        .map(|i| {
            let rr = 0.4 * ((i as f64 + 0.5) / 16.0).sqrt();
            let a = i as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
            graph.lift(&[rr * a.cos(), rr * a.sin()])
        })
        .collect();
    let r_min = centers
        .iter()
        .map(|c| *reliable_radii(&h, c, 0.5, MIN_BALL_SAMPLES).unwrap().last().unwrap())
        .fold(0.0, f64::max);
    let radii = radius_grid(0.5, r_min);
    let span = radii[0] / radii[radii.len() - 1];
    let profile = uniform_profile(&h, &centers, &radii, DEFAULT_RESOLUTION).unwrap();
    let fit = fit_beta_exponent(&profile).unwrap();
    verdict(
        (0.35..=0.65).contains(&fit.slope) && fit.ci_width() <= 0.2 && span >= 8.0,
        format!(
            "slope {:.3}, CI [{:.3}, {:.3}] width {:.3}, radii {:.3}..{:.3} (ratio {span:.1})",
            fit.slope,
            fit.ci_low,
            fit.ci_high,
            fit.ci_width(),
            radii[radii.len() - 1],
            radii[0]
        ),
    )
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let kappa = 0.05;
    let s = make_schedule(kappa, 1.0, 3).unwrap();
    let ledger = check_schedule(&s);
    let exact_fail: Vec<String> = ledger
        .entries
        .iter()
        .filter(|e| e.route == Route::Exact && !e.holds)
        .map(|e| format!("{}[{}]={:.2e}", e.name, e.level.unwrap_or(0), e.margin))
        .collect();
    let first = ledger.find("frame_first_level", Some(1), None).unwrap().margin;
    let case1 = ledger.find("case1_first_level", Some(1), None).unwrap().margin;
    let reduced_ok = first >= kappa.powi(3) / (1.0 + 4.0 * kappa) && case1 >= 7.8125e-5 && case1 >= kappa * kappa / (32.0 * 1.2);
    let formula = decay_exponent(kappa);
    let formula_ok = (formula - 9.898e-5).abs() <= 1e-8;
    let predicted = predicted_exponent(&s).ok();
    let rejects = make_schedule(1.0 / 16.0, 1.0, 3).is_err() && make_schedule(0.05, 0.005, 3).is_err();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        exact_fail.is_empty() && reduced_ok && formula_ok && predicted.is_some() && rejects && secs < 1.0,
        format!(
            "exact failures {exact_fail:?}; reduced margins {first:.4e} / {case1:.4e}; formula {formula:.6e}; predicted_exponent {predicted:?}; rejections {rejects}; {secs:.3}s"
        ),
    )
}

fn criterion_8() -> Verdict {
    let s1 = make_schedule(0.05, 1.0, 1).unwrap();
    let p = generate(&GeneratorSpec::new(GeneratorKind::Plane, 100_000, 1.0, SEED)).unwrap();
    let truth = p.meta().truth.tangent_plane.clone().unwrap();
    let plane_run = run_cascade(&p, &[0.0; 3], 0.5, &s1).unwrap();
    let (plane_ok, plane_note) = match &plane_run.outcome {
        Outcome::SmallMoment { level, plane, beta, .. } => {
            let gap = grassmann_gap(plane, &truth).unwrap();
            (*level == 1 && gap <= 1e-2, format!("plane: case 1 at level {level}, gap {gap:.1e}, β {beta:.1e}"))
        }
        o => (false, format!("plane: unexpected {o:?}")),
    };
    let (tp, x0) = two_planes(100_000, SEED);
    let off_run = run_cascade(&tp, &x0, 0.5, &s1).unwrap();
    let oracle = two_planes_b(0.5);
    let (off_ok, off_note) = match (&off_run.outcome, off_run.levels[0].tau.as_ref()) {
        (Outcome::NormalFrame { .. }, Some(tau)) => {
            let ang = angle_deg(tau, &oracle);
            (ang <= 5.0, format!("offset: case 2, τ₁ at {ang:.3}° from quadrature b"))
        }
        (o, _) => (false, format!("offset: unexpected {o:?}")),
    };
    let c = cone(1_000_000);
    let cone_run = run_cascade(&c, &[0.0; 4], 0.3, &make_schedule(0.05, 1.0, 1).unwrap()).unwrap();
    let (cone_ok, cone_note) = match &cone_run.outcome {
        Outcome::Refused { level, split_margin } => (true, format!("cone: refused at level {level}, margin {split_margin:.1e}")),
        o => (false, format!("cone: unexpected {o:?}")),
    };
    verdict(plane_ok && off_ok && cone_ok, format!("{plane_note}; {off_note}; {cone_note}"))
}

fn criterion_9() -> Verdict {
    let mut notes = Vec::new();
    let spec = GeneratorSpec::new(GeneratorKind::PerturbedDensity, 1_000_000, 2.0, SEED);
    let d = generate(&spec).unwrap();
    let x = [0.0; 3];
    let alpha = spec.params.density_alpha;
    let radii = reliable_radii(&d, &x, 1.0, MIN_BALL_SAMPLES).unwrap();
    let t_grid: Vec<f64> = (0..=10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let prof = doubling_profile(&d, &x, &radii, &t_grid).unwrap();
    let c_k = prof
        .radii
        .iter()
        .zip(&prof.r_values)
        .zip(&prof.inner_counts)
        .filter(|(_, c)| **c >= MIN_BALL_SAMPLES)
        .map(|((r, row), _)| row.iter().fold(0.0_f64, |a, v| a.max(v.abs())) / r.powf(alpha))
        .fold(0.0, f64::max);
    let mut tele_ok = c_k > 0.0;
    let mut identity_err = 0.0_f64;
    for tau in [0.3, 0.2, 0.1] {
        let bound = telescope_bound(c_k, alpha, 2, tau).unwrap();
        tele_ok &= bound.partial <= bound.constant;
        let j = bound.levels as i32;
        let t = tau.powf(1.0 / j as f64);
        for &r in radii.iter().filter(|&&r| d.ball_count(&Ball::new(x.to_vec(), tau * r).unwrap()) >= MIN_BALL_SAMPLES) {
            let mass = |s: f64| d.ball_mass(&Ball::new(x.to_vec(), s).unwrap());
            let lhs = mass(tau * r) - tau * tau * mass(r);
            let steps: f64 = (0..j)
                .map(|i| t.powi(2 * (j - 1 - i)) * (mass(t.powi(i + 1) * r) - t * t * mass(t.powi(i) * r)))
                .sum();
            identity_err = identity_err.max((lhs - steps).abs() / mass(r));
            let rt = (lhs / mass(r)).abs();
            tele_ok &= rt <= bound.constant * r.powf(alpha);
        }
    }
    notes.push(format!("telescope C_K={c_k:.3e} ok={tele_ok} identity err {identity_err:.1e}"));

    let c = cone(200_000);
    let pair = moment_form(&c, &[0.0; 4], 0.3).unwrap();
    let mut rng_state = 0x2545f4914f6cdd1du64;
    let mut next = || {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let q_err = (0..1000)
        .map(|_| {
            let z: Vec<f64> = (0..4).map(|_| next()).collect();
            let (l, r) = q_tilde_identity(&pair, &z);
            (l - r).abs()
        })
        .fold(0.0, f64::max);
    notes.push(format!("Q̃ identity err {q_err:.1e}"));

    let s = generate(&GeneratorSpec::new(GeneratorKind::Sphere, 200_000, 1.0, SEED)).unwrap();
    let xs = [0.0, 0.0, 1.0];
    let (rho, r_in) = (0.5, 0.2);
    let blown = s.blow_up(&xs, rho).unwrap();
    let scale = rho * rho / s.ball_mass(&Ball::new(xs.to_vec(), rho).unwrap());
    let o = [0.0; 3];
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let th_a = theta(&s, &xs, rho * r_in, DEFAULT_RESOLUTION).unwrap().value;
    let th_b = theta(&blown, &o, r_in, DEFAULT_RESOLUTION).unwrap().value;
    let be_a = beta_inf(&s, &xs, rho * r_in).unwrap().value;
    let be_b = beta_inf(&blown, &o, r_in).unwrap().value;
    let m_a = moment_form(&s, &xs, rho * r_in).unwrap();
    let m_b = moment_form(&blown, &o, r_in).unwrap();
    let b2_a = beta2_smooth(&s, &xs, rho * r_in).unwrap().value;
    let b2_b = beta2_smooth(&blown, &o, r_in).unwrap().value;
    let q_rel = m_a
        .q
        .entries()
        .iter()
        .zip(m_b.q.entries())
        .map(|(a, b)| (a * scale - b).abs())
        .fold(0.0, f64::max)
        / m_b.q.frobenius();
    let b_rel = norm(&m_a.b.iter().zip(&m_b.b).map(|(a, b)| a * scale / rho - b).collect::<Vec<_>>()) / m_b.b_norm();
    let cov = [
        rel(th_a, th_b),
        rel(be_a, be_b),
        q_rel,
        b_rel,
        rel(b2_a * scale.sqrt(), b2_b),
        rel(density_ratio(&s, &xs, rho * r_in).unwrap() * scale, density_ratio(&blown, &o, r_in).unwrap()),
    ];
    let cov_err = cov.iter().copied().fold(0.0, f64::max);
    notes.push(format!("blow-up covariance err {cov_err:.1e}"));

    let mut scan_equal = true;
    for (x, r) in [([0.0, 0.0, 1.0], 0.3), ([0.6, 0.0, 0.8], 0.05), ([0.0, 0.0, -1.0], 1.5)] {
        let ball = Ball::new(x.to_vec(), r).unwrap();
        scan_equal &= s.ball_mass(&ball) == s.ball_mass_scan(&ball) && s.ball_indices(&ball) == s.ball_indices_scan(&ball);
    }
    notes.push(format!("index/scan equal {scan_equal}"));
    verdict(
        tele_ok && identity_err <= 1e-12 && q_err <= 1e-12 && cov_err <= 1e-9 && scan_equal,
        notes.join("; "),
    )
}

fn pipeline_bytes(dir: &std::path::Path, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let spec = GeneratorSpec::new(GeneratorKind::HolderGraph, 50_000, 1.0, SEED);
        let path = dir.join(format!("cloud_{threads}.csv"));
        save_cloud(&generate(&spec).unwrap(), &path, CloudFormat::Csv).unwrap();
        let cloud = load_cloud(&path, None).unwrap();
        let centers = [vec![0.0; 3], LacunaryGraph::from_spec(&spec).lift(&[0.2, 0.1])];
        let radii = radius_grid(0.4, 0.1);
        let profiles: Vec<serde_json::Value> = centers
            .par_iter()
            .enumerate()
            .map(|(i, c)| profile_json(i, &flatness_profile(&cloud, c, &radii, 2000).unwrap()))
            .collect();
        let doubling: Vec<_> = centers.iter().map(|c| doubling_profile(&cloud, c, &radii, &[0.5, 0.75]).unwrap()).collect();
        let mut out = std::fs::read(&path).unwrap();
        out.extend(serde_json::to_vec(&(profiles, doubling)).unwrap());
        out
    })
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let one = pipeline_bytes(dir.path(), 1);
    let four = pipeline_bytes(dir.path(), 4);
    let again = pipeline_bytes(dir.path(), 4);
    verdict(
        one == four && four == again,
        format!("{} report bytes; 1 vs 4 threads identical: {}; rerun identical: {}", one.len(), one == four, four == again),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Verdict); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (id, run) in criteria {
        let start = Instant::now();
        let v = run();
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (v.pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (listed as known failure)",
        };
        println!("criterion {id:>2} {tag} [{:.1}s] {}", start.elapsed().as_secs_f64(), v.detail);
        if v.pass == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected outcomes: {unexpected:?}");
        std::process::exit(1);
    }
}
