mod common;

use pepnet::expr::VectorExpr;
use pepnet::function_class::{interpolation_constraints, FunctionClass, Triplet};
use proptest::prelude::*;

fn triplets(m: usize) -> Vec<Triplet> {
    (0..m)
        .map(|k| Triplet {
            label: format!("p{k}"),
            x: VectorExpr::unit(2 * m, 2 * k),
            g: VectorExpr::unit(2 * m, 2 * k + 1),
            f: k,
        })
        .collect()
}

#[test]
fn one_inequality_per_ordered_pair() {
    let fc = FunctionClass::smooth_strongly_convex(0.1, 1.0).unwrap();
    for m in 1..6 {
        assert_eq!(interpolation_constraints(&triplets(m), &fc, 0).len(), m * (m - 1));
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(FunctionClass::new(-0.1, 1.0).is_err());
    assert!(FunctionClass::new(1.0, 1.0).is_err());
    assert!(FunctionClass::new(f64::NAN, 1.0).is_err());
    assert_eq!(FunctionClass::new(0.1, 1.0).unwrap().condition_number(), 10.0);
}

#[test]
fn convex_class_keeps_only_the_first_order_term() {
    assert_eq!(FunctionClass::convex().weights(), (0.0, 0.0, 0.0));
    // f = |x| style data: a kink is interpolable by a convex function only.
    let c = FunctionClass::convex();
    let a = ([0.1], [1.0], 0.1);
    let b = ([-0.1], [-1.0], 0.1);
    assert!(c.pair_slack((&a.0, &a.1, a.2), (&b.0, &b.1, b.2)) >= 0.0);
    let smooth = FunctionClass::smooth_strongly_convex(0.0, 1.0).unwrap();
    assert!(smooth.pair_slack((&a.0, &a.1, a.2), (&b.0, &b.1, b.2)) < 0.0);
}

#[test]
fn tight_pair_of_a_quadratic() {
    // f = x^2 / 2 with mu = 0, L = 1: points 0 and 1 meet the inequality exactly.
    let fc = FunctionClass::smooth_strongly_convex(0.0, 1.0).unwrap();
    let s = fc.pair_slack((&[1.0], &[1.0], 0.5), (&[0.0], &[0.0], 0.0));
    assert!(s.abs() < 1e-15, "{s}");
    // f = x^2 with L = 1 is not 1-smooth: slack 0.5 - 2 < 0 in one direction.
    let s = fc.pair_slack((&[0.0], &[0.0], 0.0), (&[1.0], &[2.0], 1.0));
    assert!(s < 0.0);
}

#[test]
fn hundred_random_quadratics_satisfy_every_inequality() {
    let mut r = common::rng(7);
    for i in 0..100 {
        let l = 0.5 + i as f64 / 20.0;
        let fc = FunctionClass::smooth_strongly_convex(l * (i % 10) as f64 / 10.0, l).unwrap();
        let slack = common::quadratic_interpolation_slack(&mut r, &fc, 1 + i % 4, 2 + i % 4);
        assert!(slack >= -1e-10, "instance {i}: slack {slack}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn random_quadratics_are_interpolable(seed in any::<u64>(), mu_frac in 0.0f64..0.95, l in 0.1f64..10.0, d in 1usize..5, m in 2usize..6) {
        let fc = FunctionClass::smooth_strongly_convex(mu_frac * l, l).unwrap();
        let mut r = common::rng(seed);
        let slack = common::quadratic_interpolation_slack(&mut r, &fc, d, m);
        prop_assert!(slack >= -1e-10, "slack {}", slack);
    }
}
