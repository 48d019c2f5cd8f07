use std::f64::consts::PI;

use flatmeasure::doubling::{density_estimate, density_ratio, doubling_profile, doubling_ratio, DensityMethod};
use flatmeasure::fit::radius_grid;
use flatmeasure::flatness::flatness_profile;
use flatmeasure::generators::{generate, GeneratorKind, GeneratorParams, GeneratorSpec};
use flatmeasure::io::{load_cloud, save_cloud, CloudFormat};
use flatmeasure::moments::moment_form;

/// Disk mass of `1 + c|y|^α` in the radius-s ball around the origin.
fn weighted_disk_mass(s: f64, c: f64, alpha: f64) -> f64 {
    PI * s * s + 2.0 * PI * c * s.powf(alpha + 2.0) / (alpha + 2.0)
}

fn perturbed() -> (flatmeasure::WeightedCloud, GeneratorParams) {
    let params = GeneratorParams::default();
    let spec = GeneratorSpec::new(GeneratorKind::PerturbedDensity, 400_000, 2.0, 21).with_params(params.clone());
    (generate(&spec).unwrap(), params)
}

#[test]
fn perturbed_density_doubling_matches_closed_form() {
    let (cloud, p) = perturbed();
    for r in [1.5, 0.8, 0.4] {
        for t in [0.5, 0.75] {
            let want = weighted_disk_mass(t * r, p.density_c, p.density_alpha)
                / weighted_disk_mass(r, p.density_c, p.density_alpha)
                - t * t;
            let got = doubling_ratio(&cloud, &[0.0; 3], t, r).unwrap();
            assert!((got - want).abs() <= 0.05 * want.abs() + 1e-4, "r={r} t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn perturbed_density_fits_exponent_and_unit_density() {
    let (cloud, p) = perturbed();
    let radii = radius_grid(1.5, 0.1);
    let profile = doubling_profile(&cloud, &[0.0; 3], &radii, &[0.5, 0.625, 0.75, 0.875]).unwrap();
    let alpha = profile.alpha.unwrap();
    assert!((alpha - p.density_alpha).abs() < 0.1, "α̂ = {alpha}");
    let report = density_estimate(&cloud, &[0.0; 3], &radii).unwrap();
    assert_eq!(report.method, DensityMethod::Extrapolated);
    assert!((report.density - 1.0).abs() < 0.03, "density {}", report.density);
}

#[test]
fn sphere_moments_follow_cap_integrals() {
    let cloud = generate(&GeneratorSpec::new(GeneratorKind::Sphere, 400_000, 1.0, 4)).unwrap();
    let pole = [0.0, 0.0, 1.0];
    for r in [0.8, 0.5, 0.3] {
        assert!((density_ratio(&cloud, &pole, r).unwrap() - 1.0).abs() < 0.01);
        let pair = moment_form(&cloud, &pole, r).unwrap();
        let lam = pair.q.eigenvalues();
        assert!((lam[0] - r * r / 3.0).abs() < 0.02 * r * r, "r={r}: λ₀ {}", lam[0]);
        for l in &lam[1..] {
            assert!((l - (1.0 - r * r / 6.0)).abs() < 0.01, "r={r}: λ {l}");
        }
        assert!((pair.trace - 2.0).abs() < 0.01);
        let normal = &pair.q.eigenvectors()[0];
        assert!(normal[2].abs() > 0.999);
    }
}

#[test]
fn cone_vertex_has_unit_density() {
    let cloud = generate(&GeneratorSpec::new(GeneratorKind::KpCone, 400_000, 1.0, 4)).unwrap();
    for r in [0.6, 0.3] {
        assert!((density_ratio(&cloud, &[0.0; 4], r).unwrap() - 1.0).abs() < 0.02);
    }
}

#[test]
fn plane_profile_is_flat_and_cone_vertex_is_not() {
    let plane = generate(&GeneratorSpec::new(GeneratorKind::Plane, 100_000, 1.0, 2)).unwrap();
    let radii = radius_grid(0.5, 0.15);
    let flat = flatness_profile(&plane, &[0.0; 3], &radii, 2000).unwrap();
    assert!(!flat.non_flat);
    assert!(flat.scales.iter().all(|s| s.beta < 1e-12 && s.theta < 0.05));
    let cone = generate(&GeneratorSpec::new(GeneratorKind::KpCone, 200_000, 1.0, 2)).unwrap();
    let sharp = flatness_profile(&cone, &[0.0; 4], &radii, 2000).unwrap();
    assert!(sharp.non_flat);
    assert!(sharp.scales.iter().all(|s| s.theta > 1.0 && s.beta <= s.theta));
}

#[test]
fn generated_cloud_survives_round_trip() {
    let cloud = generate(&GeneratorSpec::new(GeneratorKind::KpCone, 5_000, 1.0, 9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("c.csv", CloudFormat::Csv), ("c.jsonl", CloudFormat::JsonLines)] {
        let path = dir.path().join(name);
        save_cloud(&cloud, &path, format).unwrap();
        let back = load_cloud(&path, None).unwrap();
        assert_eq!(back.coords(), cloud.coords());
        assert_eq!(back.weights(), cloud.weights());
        assert_eq!((back.dim(), back.n()), (4, 3));
        assert_eq!(back.meta().truth, cloud.meta().truth);
    }
}

