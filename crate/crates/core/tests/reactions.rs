mod common;

use std::f64::consts::PI;

use frontlab_core::reactions::*;
use frontlab_core::FrontError;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn envelope_holds(t in 0.0f64..2.0 * PI, u in 0.0f64..=1.0) {
        let f = make_default_ignition();
        let v = f.value(t, u);
        prop_assert!(f.f_min_value(u) - 1e-14 <= v && v <= f.f_max_value(u) + 1e-14);
    }

    #[test]
    fn negative_above_one(t in -50.0f64..50.0, u in 1.0f64..=2.0) {
        prop_assume!(u > 1.0);
        prop_assert!(make_default_ignition().eval(t, u).unwrap() < 0.0);
    }

    #[test]
    fn uniform_decay_above_theta_tilde(t in -50.0f64..50.0, s in 0.0f64..=1.0) {
        let f = make_default_ignition();
        let u = f.theta_tilde + s * (2.0 - f.theta_tilde);
        prop_assert!(f.eval_du(t, u).unwrap() <= -f.beta_tilde + 1e-12);
    }

    #[test]
    fn vanishes_below_theta_and_at_one(t in -50.0f64..50.0, u in -1.0f64..=0.3) {
        let f = make_default_ignition();
        prop_assert_eq!(f.eval(t, u).unwrap(), 0.0);
        prop_assert_eq!(f.eval(t, 1.0).unwrap(), 0.0);
    }

    /// Central differences track the exact derivatives with error at most
    /// `sup |d^3| h^2 / 6`; on [theta, 2] with a <= 2 that sup is below 90.
    #[test]
    fn du_matches_central_difference(t in 0.0f64..2.0 * PI, u in 0.35f64..1.95) {
        let f = make_default_ignition();
        let h = 1e-3;
        let fd = (f.eval(t, u + h).unwrap() - f.eval(t, u - h).unwrap()) / (2.0 * h);
        prop_assert!((fd - f.eval_du(t, u).unwrap()).abs() <= 15.0 * h * h);
        let fd2 = (f.eval_du(t, u + h).unwrap() - f.eval_du(t, u - h).unwrap()) / (2.0 * h);
        prop_assert!((fd2 - f.eval_duu(t, u).unwrap()).abs() <= 15.0 * h * h);
    }
}

#[test]
fn guard_range_is_enforced() {
    let f = make_default_ignition();
    for u in [-1.5, 3.5, f64::NAN] {
        assert!(matches!(f.eval(0.0, u), Err(FrontError::GuardRange { .. })));
    }
    assert!(f.eval(0.0, 2.5).is_ok());
}

#[test]
fn c1_contact_at_theta() {
    let f = make_default_ignition();
    let e = 1e-9;
    assert_eq!(f.eval_du(1.0, 0.3).unwrap(), 0.0);
    assert!(f.eval_du(1.0, 0.3 + e).unwrap().abs() < 1e-15);
}

#[test]
fn validation_is_stable_under_refinement() {
    let f = make_default_ignition();
    let spec = SamplingSpec::default();
    let coarse = validate_hypotheses(common::kernel(), &f, &spec);
    let fine = validate_hypotheses(common::kernel(), &f, &spec.doubled());
    assert!(coarse.all_pass() && fine.all_pass());
    assert!((coarse.c_fu - fine.c_fu).abs() / fine.c_fu < 1e-3);
}
