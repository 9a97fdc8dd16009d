use proptest::prelude::*;

use stretchwalk_core::density::{ExponentModel, Perturbation, PerturbedDensity};
use stretchwalk_core::paths::{sliding_slopes, Conditioning, Trajectory};
use stretchwalk_core::variational::{
    brute_force_infimum, brute_force_sandwich, closed_form_bounds, minimizer_profile, BandEvent,
    Region,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_is_nondecreasing(beta in 1.2f64..4.0, n in 2usize..9, a in 0.5f64..6.0, frac in 0.01f64..0.95) {
        let g = ExponentModel::power(beta).unwrap();
        let eps = frac * a;
        let ev = BandEvent::new(n, a, eps).unwrap();
        let ks: Vec<usize> = (1..n).take_while(|&k| a - k as f64 * eps / (n - k) as f64 > 0.0).collect();
        let vals: Vec<f64> = ks.iter().map(|&k| minimizer_profile(&g, &ev, k).unwrap()).collect();
        for w in vals.windows(2) {
            prop_assert!(w[1] >= w[0], "{vals:?}");
        }
        if let Ok(b) = closed_form_bounds(&g, &ev) {
            prop_assert_eq!(vals[0], b.f_g1);
            prop_assert!(b.h >= 0.0);
            prop_assert_eq!(b.i_icc, b.f_g1.min(b.f_g2));
        }
    }

    #[test]
    fn slopes_recover_partial_sums(xs in prop::collection::vec(0.001f64..10.0, 1..60), k_frac in 0.0f64..1.0) {
        let n = xs.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let t = Trajectory::from_increments(xs.clone(), Conditioning::Unconditioned);
        let d = sliding_slopes(&t, k).unwrap();
        prop_assert_eq!(d.len(), n - k + 1);
        for (j, v) in d.iter().enumerate() {
            let back = t.partial_sums[j] + k as f64 * v;
            prop_assert!((back - t.partial_sums[j + k]).abs() <= 1e-12 * t.partial_sums[j + k].max(1.0));
        }
        let unit = sliding_slopes(&t, 1).unwrap();
        for (u, x) in unit.iter().zip(&xs) {
            prop_assert!((u - x).abs() <= 1e-12 * x.max(1.0));
        }
    }
}

#[test]
fn perturbed_infimum_is_sandwiched() {
    let m = PerturbedDensity::new(
        ExponentModel::power(3.0).unwrap(),
        Perturbation::Sin { lambda: 0.5 },
    )
    .unwrap();
    for (n, a, eps) in [(2, 2.0, 0.5), (3, 3.0, 1.0), (4, 2.5, 0.8)] {
        let ev = BandEvent::new(n, a, eps).unwrap();
        let (lo, hi) = brute_force_sandwich(&m, &ev, Region::IccC).unwrap();
        let mid = brute_force_infimum(&m, &ev, Region::IccC).unwrap();
        assert!(lo <= mid + 1e-9 && mid <= hi + 1e-9, "{lo} {mid} {hi}");
    }
}
