use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsii_core::phantom::{make_sphere_phantom, SphereParams};
use rsii_core::registration::*;
use rsii_core::volume::VoxelGrid;

/// Smooth random 8^3 image.
fn random_image(seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..512).map(|_| rng.gen_range(0.0..100.0) as f32).collect();
    VoxelGrid::new([8; 3], [1.0, 1.2, 0.9], [0.0; 3], data).unwrap().gaussian_smooth([1.0; 3])
}

fn random_field(grid: &VoxelGrid, seed: u64, amplitude: f64) -> DisplacementField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DisplacementField::from_fn(grid, |_| [(); 3].map(|_| rng.gen_range(-amplitude..amplitude)))
}

/// Largest componentwise relative error of the analytic gradient against
/// central differences of the surrogate energy.
fn gradient_error(seed: u64, lambda_tv: f64) -> f64 {
    let fixed = random_image(seed);
    let moving = random_image(seed + 1000);
    let field = random_field(&fixed, seed + 2000, 0.8);
    let (_, grad) = registration_energy_and_gradient(&fixed, &moving, &field, lambda_tv).unwrap();
    let scale = grad.iter().flatten().map(|g| g.abs()).fold(0.0, f64::max);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for v in 0..field.len() {
        for c in 0..3 {
            let mut plus = field.clone();
            plus.vectors_mut()[v][c] += h;
            let mut minus = field.clone();
            minus.vectors_mut()[v][c] -= h;
            let fd = (surrogate_energy(&fixed, &moving, &plus, lambda_tv).unwrap()
                - surrogate_energy(&fixed, &moving, &minus, lambda_tv).unwrap())
                / (2.0 * h);
            let g = grad[v][c];
            let denom = g.abs().max(fd.abs()).max(1e-3 * scale);
            worst = worst.max((fd - g).abs() / denom);
        }
    }
    worst
}

#[test]
fn data_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let e = gradient_error(seed, 0.0);
        assert!(e <= 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn smoothed_tv_gradient_matches_finite_differences() {
    let e = gradient_error(7, 50.0);
    assert!(e <= 1e-4, "{e}");
}

fn small_sphere() -> VoxelGrid {
    let p = SphereParams {
        radius: 10.0,
        wall_thickness: 2.0,
        spacing: 1.0,
        inflation: 0.0,
        smoothing_sigma: 1.0,
    };
    make_sphere_phantom(&p).unwrap().fixed_image
}

fn rms_difference(a: &VoxelGrid, b: &VoxelGrid) -> f64 {
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
    (s / a.len() as f64).sqrt()
}

#[test]
fn self_registration_stays_at_rest() {
    let fixed = small_sphere();
    let field = register(&fixed, &fixed, &RegConfig::default()).unwrap();
    let voxel = fixed.spacing()[0];
    assert!(field.rms_magnitude() <= 0.05 * voxel);
}

#[test]
fn known_translation_is_recovered() {
    let fixed = small_sphere();
    // moving(y) = fixed(y - d): the feature at x in the fixed frame sits at
    // x + d in the moving frame, so the expected field is +d
    let d = [2.0, 0.0, 0.0];
    let moving = VoxelGrid::from_fn(fixed.dims(), fixed.spacing(), fixed.origin(), |p| {
        fixed.sample_trilinear([p[0] - d[0], p[1] - d[1], p[2] - d[2]]) as f32
    })
    .unwrap();
    let (field, log) = register_with_log(&fixed, &moving, &RegConfig::default()).unwrap();

    // wall band: the top gradient voxels of the fixed image
    let dims = fixed.dims();
    let mut grads = Vec::new();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let (_, g) = fixed.sample_with_gradient(fixed.point_of(i, j, k));
                grads.push((g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt());
            }
        }
    }
    let gmax = grads.iter().copied().fold(0.0, f64::max);
    let mut errors: Vec<f64> = (0..field.len())
        .filter(|&i| grads[i] >= 0.25 * gmax)
        .map(|i| {
            let u = field.vectors()[i];
            ((u[0] - d[0]).powi(2) + (u[1] - d[1]).powi(2) + (u[2] - d[2]).powi(2)).sqrt()
        })
        .collect();
    assert!(errors.len() > 100);
    errors.sort_by(f64::total_cmp);
    let median = errors[errors.len() / 2];
    assert!(median <= 0.25, "median wall-band error {median} mm");

    let before = rms_difference(&moving, &fixed);
    let after = rms_difference(&warp(&moving, &field).unwrap(), &fixed);
    assert!(after <= 0.2 * before, "residual {after} of {before}");

    for level in &log.levels {
        assert!(level.energy.windows(2).all(|w| w[1] <= w[0]), "level {} energy went up", level.level);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let g = small_sphere();
    for bad in [
        RegConfig { lambda_tv: -1.0, ..RegConfig::default() },
        RegConfig { pyramid_levels: 0, ..RegConfig::default() },
        RegConfig { admm_penalty: 0.0, ..RegConfig::default() },
    ] {
        assert!(register(&g, &g, &bad).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn identical_images_at_rest_cost_nothing(seed in 0u64..10_000, lambda in 0.0f64..500.0) {
        let img = random_image(seed);
        let zero = DisplacementField::zeros_like(&img);
        let (e, g) = registration_energy_and_gradient(&img, &img, &zero, lambda).unwrap();
        prop_assert_eq!(e, 0.0);
        prop_assert!(g.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn energy_is_nonnegative_and_splits(seed in 0u64..10_000, lambda in 0.0f64..500.0) {
        let fixed = random_image(seed);
        let moving = random_image(seed + 1);
        let field = random_field(&fixed, seed + 2, 1.0);
        let terms = energy_terms(&fixed, &moving, &field, lambda).unwrap();
        let (e, _) = registration_energy_and_gradient(&fixed, &moving, &field, lambda).unwrap();
        prop_assert!(terms.data >= 0.0 && terms.tv >= 0.0);
        prop_assert!((terms.total() - e).abs() <= 1e-9 * e.abs().max(1.0));
    }

    #[test]
    fn warping_by_a_constant_shift_translates(seed in 0u64..10_000, shift in -0.4f64..0.4) {
        let img = random_image(seed);
        let field = DisplacementField::from_fn(&img, |_| [shift, 0.0, 0.0]);
        let warped = warp(&img, &field).unwrap();
        let c = img.point_of(4, 4, 4);
        let expect = img.sample_trilinear([c[0] + shift, c[1], c[2]]);
        prop_assert!((warped.get(4, 4, 4) as f64 - expect).abs() <= 1e-4 * expect.abs().max(1.0));
    }
}
