use proptest::prelude::*;
use rsii_core::geometry::LocalFrame;
use rsii_core::indices::*;
use rsii_core::numeric::Vec3;
use rsii_core::solver::{SurfaceField, Units};
use rsii_core::Error;

fn field(name: &str, values: Vec<f64>) -> SurfaceField {
    SurfaceField::new(name, Units::Dimensionless, values).unwrap()
}

#[test]
fn hand_example_sii() {
    // 3% strain under 325 N/m is 0.03 / 325 m/N = 0.0923 mm/N
    let strain = field("e", vec![0.03]);
    let tension = field("t", vec![325.0]);
    let sii = structural_integrity_index(&strain, &tension, &[false]).unwrap();
    assert!((sii.values[0] * 1e3 - 0.0923).abs() < 5e-5);
    assert!((sii.values[0] - 0.03 / 325.0).abs() < 1e-18);
}

#[test]
fn strain_from_normal_displacement_and_radius() {
    // 0.75 mm outward on a 25 mm radius is 3%
    let frame = LocalFrame::from_normal(Vec3::new(1.0, 0.0, 0.0), Vec3::z()).unwrap();
    let (u_n, u_t) = normal_displacement(&[[0.75, 0.0, 0.2]], &[frame]).unwrap();
    assert!((u_n.values[0] - 0.75).abs() < 1e-15);
    assert!((u_t.values[0] - 0.2).abs() < 1e-15);
    let e = circumferential_strain(&u_n, &[25.0]).unwrap();
    assert!((e.values[0] - 0.03).abs() < 1e-15);
}

#[test]
fn uniform_sii_gives_unit_rsii() {
    let sii = field("sii", vec![9.23e-5; 50]);
    let mask = vec![false; 50];
    let r = relative_sii(&sii, &mask, &RsiiOptions::default(), None).unwrap();
    assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
}

#[test]
fn masked_vertices_are_excluded_and_counted() {
    let u_n = field("u", vec![0.75, 0.75, 0.5, 0.75]);
    let radius = [25.0; 4];
    let tension = field("t", vec![325.0, 0.0, 325.0, 325.0]);
    let clamped = [false, false, false, true];
    let outside = [false; 4];
    let b = compute_indices(&u_n, &radius, &clamped, &outside, &tension, &RsiiOptions::default(), None).unwrap();
    assert_eq!(b.mask, vec![false, true, false, true]);
    assert_eq!(b.masked.nonpositive_tension, 1);
    assert_eq!(b.masked.clamped_curvature, 1);
    assert_eq!(b.masked.total, 2);
    assert_eq!(b.report.vertices_used, 2);
    assert_eq!(b.sii.values[1], 0.0);
    assert_eq!(b.rsii.values[3], 0.0);
    // remaining SII ratio 3:2 around a mean of 2.5
    assert!((b.rsii.values[0] - 1.2).abs() < 1e-12);
    assert!((b.rsii.values[2] - 0.8).abs() < 1e-12);
}

#[test]
fn zero_strain_is_degenerate_not_nan() {
    let n = 5;
    let b = compute_indices(
        &field("u", vec![0.0; n]),
        &[25.0; 5],
        &[false; 5],
        &[false; 5],
        &field("t", vec![325.0; n]),
        &RsiiOptions::default(),
        None,
    )
    .unwrap();
    assert!(b.rsii_degenerate);
    assert!(b.rsii.values.iter().all(|v| *v == 0.0));
    assert!(matches!(
        relative_sii(&b.sii, &b.mask, &RsiiOptions::default(), None),
        Err(Error::Degenerate(_))
    ));
}

#[test]
fn area_weighting_needs_areas() {
    let sii = field("sii", vec![1.0, 3.0]);
    let area = RsiiOptions {
        weighting: MeanWeighting::Area,
        ..RsiiOptions::default()
    };
    assert!(relative_sii(&sii, &[false, false], &area, None).is_err());
    let r = relative_sii(&sii, &[false, false], &area, Some(&[3.0, 1.0])).unwrap();
    // weighted mean 1.5
    assert!((r.values[1] - 2.0).abs() < 1e-15);
}

#[test]
fn summary_statistics() {
    let values: Vec<f64> = (1..=101).map(f64::from).collect();
    let s = summarize(&values, &vec![false; 101]);
    assert!((s.p99_abs - 100.0).abs() < 1e-12);
    assert!((s.mean - 51.0).abs() < 1e-12);
    let var: f64 = values.iter().map(|v| (v - 51.0).powi(2)).sum::<f64>() / 101.0;
    assert!((s.std - var.sqrt()).abs() < 1e-12);
}

fn inputs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>)> {
    (3usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec(-0.1f64..0.1, n),
            prop::collection::vec(1.0f64..1000.0, n),
            prop::collection::vec(prop::bool::weighted(0.1), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mean_rsii_is_one((strain, tension, mut mask) in inputs()) {
        mask[0] = false;
        let mut strain = strain;
        strain[0] = 0.05;
        let sii = structural_integrity_index(&field("e", strain), &field("t", tension), &mask).unwrap();
        for mode in [RsiiMode::Absolute, RsiiMode::Signed] {
            let options = RsiiOptions { mode, ..RsiiOptions::default() };
            let Ok(r) = relative_sii(&sii, &mask, &options, None) else { continue };
            let kept: Vec<f64> = r.values.iter().zip(&mask).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
            let mean = rsii_core::numeric::compensated_sum(kept.iter().copied()) / kept.len() as f64;
            prop_assert!((mean - 1.0).abs() <= 1e-12, "mode {:?}: mean {}", mode, mean);
        }
    }

    #[test]
    fn rsii_ignores_a_common_tension_scale((strain, tension, mask) in inputs(), scale in 0.01f64..100.0) {
        let mut strain = strain;
        strain[0] = 0.05;
        let mut mask = mask;
        mask[0] = false;
        let scaled: Vec<f64> = tension.iter().map(|t| t * scale).collect();
        let a = structural_integrity_index(&field("e", strain.clone()), &field("t", tension), &mask).unwrap();
        let b = structural_integrity_index(&field("e", strain), &field("t", scaled), &mask).unwrap();
        let ra = relative_sii(&a, &mask, &RsiiOptions::default(), None).unwrap();
        let rb = relative_sii(&b, &mask, &RsiiOptions::default(), None).unwrap();
        for (x, y) in ra.values.iter().zip(&rb.values) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn sii_sign_follows_strain(e in -0.1f64..0.1, t in 1.0f64..1000.0) {
        let s = structural_integrity_index(&field("e", vec![e]), &field("t", vec![t]), &[false]).unwrap();
        prop_assert_eq!(s.values[0].signum(), if e == 0.0 { s.values[0].signum() } else { e.signum() });
    }
}
