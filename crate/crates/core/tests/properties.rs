mod common;

use lqc_trust::controllers::lambda_confident_action;
use lqc_trust::metrics::{prediction_error, self_variation};
use lqc_trust::riccati::RiccatiSolution;
use nalgebra::DVector;
use proptest::prelude::*;

fn system(seed: u64, n: usize, m: usize, horizon: usize) -> RiccatiSolution {
    common::random_system(&mut common::rng(seed), n, m, horizon).1
}

fn seq(n: usize, len: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, n).prop_map(DVector::from_vec), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn action_is_affine(seed in 0u64..1000, lambda in -2.0..3.0f64, w_hat in seq(3, 6), x in seq(3, 1), t in 0usize..6) {
        let ric = system(seed, 3, 2, 6);
        let x = &x[0];
        let u0 = lambda_confident_action(&ric, x, t, &w_hat, 0.0).unwrap();
        let u1 = lambda_confident_action(&ric, x, t, &w_hat, 1.0).unwrap();
        let u = lambda_confident_action(&ric, x, t, &w_hat, lambda).unwrap();
        let mix = &u0 * (1.0 - lambda) + &u1 * lambda;
        prop_assert!((u - &mix).norm() <= 1e-12 * mix.norm().max(1.0));
    }

    #[test]
    fn prediction_error_is_symmetric(seed in 0u64..1000, w in seq(2, 8), w_hat in seq(2, 8)) {
        let ric = system(seed, 2, 1, 8);
        let a = prediction_error(&ric, &w, &w_hat).unwrap();
        let b = prediction_error(&ric, &w_hat, &w).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert_eq!(prediction_error(&ric, &w, &w).unwrap(), 0.0);
    }

    #[test]
    fn self_variation_is_homogeneous(y in seq(3, 10), c in -10.0..10.0f64) {
        let base = self_variation(&y);
        let scaled = self_variation(&common::scaled(&y, c));
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * base.max(1.0));
    }

    #[test]
    fn constant_sequences_have_no_variation(v in seq(4, 1), len in 0usize..20) {
        let y = vec![v[0].clone(); len];
        prop_assert_eq!(self_variation(&y), 0.0);
    }
}
