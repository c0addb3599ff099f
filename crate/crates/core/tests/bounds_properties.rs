//! Properties of the ν thresholds and the positivity rescaling over random
//! instances.

use alphapred::bounds::{nu_limits, rescale_c_for_positivity};
use nalgebra::DVector;
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize, usize, usize)> {
    (1usize..=6).prop_flat_map(|l| {
        (
            prop::collection::vec(0.01f64..10.0, l),
            prop::collection::vec(1.0f64..20.0, l),
            l..=l + 4,
            0usize..4,
            1usize..15,
        )
            .prop_map(move |(d, c, m, extra_k, dof)| {
                let k = l + extra_k;
                (d, c, m, k + dof, k)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn nu2_and_nu3_are_positive((d, c, m, n, k) in instance()) {
        let b = nu_limits(&DVector::from_vec(d), &DVector::from_vec(c), m, n, k).unwrap();
        prop_assert!(b.nu3 > 0.0);
        if n - k >= 2 {
            prop_assert!(b.nu2 > 0.0);
        }
        prop_assert!(b.nu_max <= b.nu1 && b.nu_max <= b.nu2 && b.nu_max <= b.nu3);
        prop_assert_eq!(b.positive, b.nu_max > 0.0);
    }

    #[test]
    fn bounds_depend_only_on_ratios((d, c, m, n, k) in instance(), scale in 0.1f64..10.0) {
        let d = DVector::from_vec(d);
        let c = DVector::from_vec(c);
        let c_scaled = &c * scale.max(1.0);
        let d_scaled = &d * scale.max(1.0);
        let a = nu_limits(&d, &c, m, n, k).unwrap();
        let b = nu_limits(&d_scaled, &c_scaled, m, n, k).unwrap();
        for (x, y) in [(a.nu1, b.nu1), (a.nu2, b.nu2), (a.nu3, b.nu3)] {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn rescaled_c_is_positive((d, c, m, n, k) in instance()) {
        let d = DVector::from_vec(d);
        let c0 = DVector::from_vec(c);
        let g = rescale_c_for_positivity(&d, &c0, m, n, k).unwrap();
        prop_assert!(g >= 1.0);
        let b = nu_limits(&d, &(&c0 * g), m, n, k).unwrap();
        prop_assert!(b.nu1 > 0.0, "{b:?}");
        if nu_limits(&d, &c0, m, n, k).unwrap().nu1 > 0.0 {
            prop_assert_eq!(g, 1.0);
        }
    }

    #[test]
    fn rescale_is_monotone_in_the_deficit(d1 in 1.0f64..50.0, extra in 0.0f64..50.0, m in 1usize..4, dof in 1usize..12) {
        let small = DVector::from_vec(vec![d1, 0.5]);
        let large = DVector::from_vec(vec![d1 + extra, 0.5]);
        let c = DVector::from_element(2, 1.0);
        let g_small = rescale_c_for_positivity(&small, &c, m, 2 + dof, 2).unwrap();
        let g_large = rescale_c_for_positivity(&large, &c, m, 2 + dof, 2).unwrap();
        prop_assert!(g_large >= g_small);
    }
}

#[test]
fn nu3_stays_positive_as_c_grows() {
    let d = DVector::from_element(3, 1.0);
    for c in [1e2, 1e6, 1e12] {
        let b = nu_limits(&d, &DVector::from_element(3, c), 3, 12, 3).unwrap();
        assert!(b.nu3 > 0.0 && b.nu3 < 4.0 / c * 1.0001);
    }
}
