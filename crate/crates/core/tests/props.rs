//! Property tests for the invariants that quantify over continuous inputs:
//! reflection and inversion round-trips, the transference identity, and
//! agreement of the interval cover with brute force.

use dioph::geometry::AffinePair;
use dioph::linalg::Mat;
use dioph::oracle::{dirichlet_on_window, solvable_at, OracleParams};
use dioph::weights::{int_dist, ApproxFunction, WeightFunction, WeightSystem};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reflection_round_trip(t in 1e-6f64..1.0, rho in 0.05f64..4.0) {
        let h = WeightFunction::power(rho).unwrap();
        let prod = h.eval(t).unwrap() * h.eval(1.0 / t).unwrap();
        prop_assert!((prod - 1.0).abs() < 1e-9);
        let b1 = dioph::weights::changing_weights::beta1();
        let prod = b1.eval(t).unwrap() * b1.eval(1.0 / t).unwrap();
        prop_assert!((prod - 1.0).abs() < 1e-9);
    }

    #[test]
    fn inversion_round_trip(t in 1.0f64..1e6, rho in 0.1f64..3.0) {
        let h = WeightFunction::power(rho).unwrap();
        let back = h.invert(h.eval(t).unwrap()).unwrap();
        prop_assert!((back - t).abs() <= 1e-12 * t.max(1.0));
        let b2 = dioph::weights::changing_weights::beta2();
        let back = b2.invert(b2.eval(t).unwrap()).unwrap();
        prop_assert!((back - t).abs() <= 1e-10 * t.max(1.0));
    }

    #[test]
    fn duality_involution(b in 0.1f64..10.0, a in 0.2f64..3.0, t in 1.0f64..1e5) {
        let f = ApproxFunction::scaled_power(b, a).unwrap();
        let ff = f.duality_transform().unwrap().duality_transform().unwrap();
        let (x, y) = (f.eval(t).unwrap(), ff.eval(t).unwrap());
        prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
    }

    #[test]
    fn transference_identity(
        theta_e in prop::collection::vec(-5.0f64..5.0, 4),
        eta in prop::collection::vec(-2.0f64..2.0, 2),
        q in prop::collection::vec(-40i64..40, 2),
        y in prop::collection::vec(-40i64..40, 2),
    ) {
        let theta = Mat::from_rows(&[
            vec![theta_e[0], theta_e[1]],
            vec![theta_e[2], theta_e[3]],
        ]).unwrap();
        let res = dioph::badapprox::transference_identity_residual(&theta, &eta, &q, &y);
        prop_assert!(res <= 1e-9, "residual {res}");
    }

    #[test]
    fn cover_matches_brute_force(
        theta in 0.0f64..1.0,
        eta in 0.0f64..1.0,
        t in 2.0f64..80.0,
        b in 0.3f64..2.0,
    ) {
        let ws = WeightSystem::equal_power_weights(1, 1).unwrap();
        let g = ApproxFunction::scaled_power(b, 1.0).unwrap();
        let pair = AffinePair::scalar(theta, eta);
        let params = OracleParams { keep_witnesses: false, ..Default::default() };
        let report = dirichlet_on_window(&pair, &ws, &g, 1.0, 100.0, &params).unwrap();
        let covered = report.covered.iter().any(|(l, r)| *l <= t && t <= *r);
        let brute = solvable_at(&pair, &ws, &g, t, 1.0, 1 << 22).unwrap();
        prop_assert_eq!(covered, brute);
    }

    #[test]
    fn weighted_distance_below_half_norm_of_rounding(
        x in prop::collection::vec(-20.0f64..20.0, 3),
        rho in prop::collection::vec(0.2f64..2.0, 3),
    ) {
        let w: Vec<WeightFunction> =
            rho.iter().map(|r| WeightFunction::power(*r).unwrap()).collect();
        let d = dioph::weights::nearest_integer_distance(&x, &w).unwrap();
        // distance never exceeds the norm of the all-half vector
        let half = dioph::weights::weighted_norm(&[0.5; 3], &w).unwrap();
        prop_assert!(d <= half + 1e-12);
        // scalar distances agree coordinatewise with int_dist
        for (xi, wi) in x.iter().zip(&w) {
            let di = dioph::weights::nearest_integer_distance(&[*xi], std::slice::from_ref(wi)).unwrap();
            let expect = if int_dist(*xi) == 0.0 {
                0.0
            } else {
                wi.invert(int_dist(*xi)).unwrap()
            };
            prop_assert!((di - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }
}
