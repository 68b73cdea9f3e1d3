mod common;

use ddal::neural::{apply_update, GradientVector, ParameterVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let worst = common::gradient_check_worst(&mut rng, 200);
    assert!(worst < 1e-4, "worst block relative error {worst:e}");
}

#[test]
fn reference_forward_agrees_with_library() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for h in [1, 3, 64] {
        let shape = common::shape(h);
        let values: Vec<f64> = (0..shape.param_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let p = ParameterVector::from_values(shape, values.clone()).unwrap();
        let net = common::RefNet { p: &values, h };
        for _ in 0..20 {
            let obs: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let a = ddal::neural::policy_forward(&p, &obs).unwrap();
            let b = net.probs(&obs);
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
            let v = ddal::neural::value_forward(&p, &obs).unwrap();
            assert!((v - net.value(&obs)).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn sgd_commutes_with_gradient_scaling(
        values in prop::collection::vec(-10.0f64..10.0, 29),
        grad in prop::collection::vec(-10.0f64..10.0, 29),
        lr in 1e-4f64..1.0,
    ) {
        let shape = common::shape(2);
        prop_assume!(shape.param_count() == 29);
        let p = ParameterVector::from_values(shape.clone(), values).unwrap();
        let g = GradientVector::from_values(shape, grad).unwrap();
        let a = apply_update(&p, &g.scaled(2.0), lr).unwrap();
        let b = apply_update(&p, &g, 2.0 * lr).unwrap();
        prop_assert_eq!(a, b);
    }
}
