mod common;

use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsii_core::geometry::*;
use rsii_core::phantom::{make_cylinder_phantom, make_sphere_phantom, CylinderParams, SphereParams};
use rsii_core::volume::{LUMEN, WALL};

use common::{icosphere, percentile, rel, tube};

fn radii(surface: &mut TriangleSurface, neighborhood: f64) -> Vec<f64> {
    local_frames(surface, 16).unwrap();
    curvature_radii(surface, neighborhood, &MlesacParams::default()).unwrap();
    surface.curvature_radius.clone().unwrap()
}

/// Adds a deterministic radial jitter so fits see a non-exact surface.
fn roughen(surface: &mut TriangleSurface, amplitude: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = surface.centroid();
    for p in &mut surface.vertices {
        let d = Vector3::from(*p) - c;
        let q = c + d * (1.0 + amplitude * rng.gen_range(-1.0..1.0) / d.norm());
        *p = [q.x, q.y, q.z];
    }
}

#[test]
fn analytic_sphere_radius_within_two_percent() {
    let mut s = icosphere(25.0, 5, [0.0; 3]);
    let r = GeometryParams::default().resolve_radius(&s);
    let radius = radii(&mut s, r);
    let worst = radius.iter().map(|&x| rel(x, 25.0)).fold(0.0, f64::max);
    assert!(worst <= 0.02, "worst relative error {worst}");
    assert!(s.curvature_flags.unwrap().iter().all(|f| !f));
}

#[test]
fn analytic_cylinder_gives_the_tube_radius() {
    let mut s = tube(25.0, 80.0, 160, 81);
    let radius = radii(&mut s, 8.0);
    let interior: Vec<f64> = (0..s.vertex_count())
        .filter(|&v| s.vertices[v][2].abs() < 30.0)
        .map(|v| radius[v])
        .collect();
    for r in &interior {
        assert!((23.0..=31.0).contains(r), "radius {r}");
        assert!(rel(*r, 25.0) < 0.02, "radius {r}");
    }
}

#[test]
fn mlesac_is_deterministic_under_a_seed() {
    let mut a = icosphere(20.0, 3, [1.0, 2.0, 3.0]);
    roughen(&mut a, 0.2, 3);
    let mut b = a.clone();
    assert_eq!(radii(&mut a, 9.0), radii(&mut b, 9.0));
}

#[test]
fn thirty_percent_outliers_stay_within_five_percent_of_clean_fit() {
    let clean = icosphere(25.0, 4, [0.0; 3]);
    let neighborhood = 9.0;
    let clean_radius = radii(&mut clean.clone(), neighborhood);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut noisy = clean.clone();
    let mut outlier = vec![false; noisy.vertex_count()];
    for v in 0..noisy.vertex_count() {
        if rng.gen_bool(0.3) {
            outlier[v] = true;
            let offset = rng.gen_range(1.0..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let p = Vector3::from(noisy.vertices[v]);
            let q = p * (1.0 + offset / p.norm());
            noisy.vertices[v] = [q.x, q.y, q.z];
        }
    }
    // frames from the clean surface, so only the fit sees the outliers
    noisy.frames = Some(clean_frames(&clean));
    curvature_radii(&mut noisy, neighborhood, &MlesacParams::default()).unwrap();
    let noisy_radius = noisy.curvature_radius.clone().unwrap();
    let errors: Vec<f64> = (0..clean.vertex_count())
        .filter(|&v| !outlier[v])
        .map(|v| rel(noisy_radius[v], clean_radius[v]))
        .collect();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    assert!(worst <= 0.05, "worst {worst}, median {}", percentile(&errors, 0.5));
}

#[test]
fn sphere_phantom_lumen_surface() {
    let case = make_sphere_phantom(&SphereParams::default()).unwrap();
    let s = extract_surface(&case.labels, LUMEN, 0.5).unwrap();
    assert_eq!(s.euler_characteristic(), 2);
    assert!(s.is_closed());
    let c = Vector3::from(case.info.center);
    for v in 0..s.vertex_count() {
        let d = (s.vertex(v) - c).norm();
        assert!((d - 25.0).abs() <= 1.0, "vertex {v} at {d}");
    }
}

#[test]
fn analytic_sphere_normals_are_radial() {
    let mut s = icosphere(25.0, 4, [3.0, -2.0, 1.0]);
    roughen(&mut s, 0.1, 1);
    local_frames(&mut s, 16).unwrap();
    let c = Vector3::new(3.0, -2.0, 1.0);
    for (v, f) in s.frames.as_ref().unwrap().iter().enumerate() {
        let radial = (s.vertex(v) - c).normalize();
        let angle = f.n().dot(&radial).clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle <= 3.0, "vertex {v}: normal {angle} deg off radial");
    }
}

#[test]
fn cylinder_phantom_surface_is_an_open_tube() {
    let mut p = CylinderParams::default();
    p.spacing = 1.0;
    let case = make_cylinder_phantom(&p).unwrap();
    let s = extract_surface_of(&case.labels, &[WALL, LUMEN], 0.5).unwrap();
    s.check_manifold().unwrap();
    assert_eq!(s.euler_characteristic(), 0);
    assert_eq!(s.end_rings.len(), 2);
    assert!(s.end_rings[0].iter().all(|&v| s.vertices[v][2] < 0.0));
}

#[test]
fn vertex_areas_sum_to_surface_area() {
    let s = icosphere(10.0, 4, [0.0; 3]);
    let total: f64 = s.vertex_areas().iter().sum();
    let triangles: f64 = (0..s.triangles.len()).map(|t| s.triangle_area(t)).sum();
    assert!(rel(total, triangles) < 1e-12);
    assert!(rel(total, 4.0 * std::f64::consts::PI * 100.0) < 0.01);
}

fn clean_frames(s: &TriangleSurface) -> Vec<LocalFrame> {
    let mut c = s.clone();
    local_frames(&mut c, 16).unwrap();
    c.frames.unwrap()
}

fn rotation(a: f64, b: f64, c: f64) -> Matrix3<f64> {
    Rotation3::from_euler_angles(a, b, c).into_inner()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn curvature_is_invariant_under_rigid_motion(
        a in -3.1f64..3.1, b in -1.5f64..1.5, c in -3.1f64..3.1,
        tx in -50.0f64..50.0, ty in -50.0f64..50.0, tz in -50.0f64..50.0,
        seed in 0u64..1000,
    ) {
        let mut s = icosphere(20.0, 3, [0.0; 3]);
        roughen(&mut s, 0.3, seed);
        let base = radii(&mut s.clone(), 9.0);
        let mut moved = s.transformed(&rotation(a, b, c), Vector3::new(tx, ty, tz), 1.0);
        let after = radii(&mut moved, 9.0);
        for (x, y) in base.iter().zip(&after) {
            prop_assert!(rel(*y, *x) <= 1e-6, "{} vs {}", x, y);
        }
    }

    #[test]
    fn curvature_scales_linearly(scale in 0.5f64..3.0, seed in 0u64..1000) {
        let mut s = icosphere(20.0, 3, [0.0; 3]);
        roughen(&mut s, 0.3, seed);
        let base = radii(&mut s.clone(), 9.0);
        let mut scaled = s.transformed(&Matrix3::identity(), Vector3::zeros(), scale);
        // the inlier tolerance is a length too
        let params = MlesacParams { inlier_tol: 0.3 * scale, ..MlesacParams::default() };
        local_frames(&mut scaled, 16).unwrap();
        curvature_radii(&mut scaled, 9.0 * scale, &params).unwrap();
        let after = scaled.curvature_radius.unwrap();
        for (x, y) in base.iter().zip(&after) {
            prop_assert!(rel(*y, scale * x) <= 1e-3, "{} vs {}", scale * x, y);
        }
    }

    #[test]
    fn frames_are_orthonormal_and_outward(radius in 5.0f64..40.0, seed in 0u64..1000) {
        let mut s = icosphere(radius, 3, [0.0; 3]);
        roughen(&mut s, 0.01 * radius, seed);
        local_frames(&mut s, 16).unwrap();
        for (v, f) in s.frames.as_ref().unwrap().iter().enumerate() {
            prop_assert!(f.orthonormality_error() < 1e-9);
            prop_assert!(f.n().dot(&s.vertex(v)) > 0.0);
        }
    }
}
