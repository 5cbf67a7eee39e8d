mod common;

use atmpc_core::estimator::{bound_update, rls_update, should_update};
use atmpc_core::{Estimator, EstimatorConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bundled_estimator() -> (Estimator, common::Scenario) {
    let s = common::bundled();
    let est = Estimator::new(s.model.clone(), s.estimator_config(), &s.x0).unwrap();
    (est, s)
}

/// Drive the true plant with `u = Kx + noise`; `check` runs at every step start.
fn drive(
    est: &mut Estimator,
    s: &common::Scenario,
    theta: &DVector<f64>,
    steps: usize,
    seed: u64,
    mut check: impl FnMut(&Estimator, &DVector<f64>, usize),
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = s.x0.clone();
    for k in 0..steps {
        check(est, &x, k);
        est.begin_step(&x).unwrap();
        let u = &s.constraints.k * &x
            + DVector::from_fn(s.model.n_u(), |_, _| rng.random_range(-1.0..1.0));
        est.end_step(&x, &u);
        x = s.model.step(theta, &x, &u);
    }
}

#[test]
fn initial_state_matches_the_configuration() {
    let (est, _) = bundled_estimator();
    let st = est.state();
    assert_eq!(st.theta_hat, DVector::zeros(2));
    assert_eq!(st.bound, 0.15);
    assert_eq!(st.updates, 0);
    let vs = st.fss.vertices().unwrap();
    assert_eq!(vs.len(), 8);
}

#[test]
fn rls_step_matches_a_hand_computation() {
    // Γ = 0.15 I, λ = 0.5, w = [[1, 0], [0, 2]]: Γ₊ = diag(1.075, 4.075).
    let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
    let gamma = DMatrix::identity(2, 2) * 0.15;
    let x_tilde = DVector::from_vec(vec![0.3, -0.4]);
    let eta = DVector::from_vec(vec![0.1, 0.0]);
    let (theta, g) = rls_update(&DVector::zeros(2), &gamma, &w, &x_tilde, &eta, 0.5).unwrap();
    assert!((g[(0, 0)] - 1.075).abs() < 1e-15);
    assert!((g[(1, 1)] - 4.075).abs() < 1e-15);
    assert!((theta[0] - 0.2 / 1.075).abs() < 1e-15);
    assert!((theta[1] - (-0.8 / 4.075)).abs() < 1e-15);
}

#[test]
fn update_rule_and_bound_schedule() {
    let small = DVector::from_vec(vec![1e-4, 0.0]);
    assert!(!should_update(&small, 1e-4, 1e-3, 1e-3));
    assert!(should_update(&small, 1e-3, 1e-3, 1e-3));
    assert!(should_update(
        &DVector::from_vec(vec![1e-3, 0.0]),
        0.0,
        1e-3,
        1e-3
    ));
    assert_eq!(bound_update(0.15, 0.5), 0.075);
}

#[test]
fn prediction_error_is_the_filtered_regression_plus_a_decaying_term() {
    let (mut est, s) = bundled_estimator();
    let theta = s.theta_true.clone();
    let mut checked = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut x = s.x0.clone();
    for _ in 0..30 {
        let st = est.state().clone();
        let info = est.begin_step(&x).unwrap();
        let expected = &st.filter_w * (&theta - &st.theta_hat) + &st.eta;
        assert!(
            (&info.x_tilde - &expected).amax() < 1e-12 * (1.0 + x.amax()),
            "{info:?} vs {expected:?}"
        );
        checked += 1;
        let u = DVector::from_fn(1, |_, _| rng.random_range(-2.0..2.0));
        est.end_step(&x, &u);
        x = s.model.step(&theta, &x, &u);
    }
    assert_eq!(checked, 30);
}

#[test]
fn disabled_estimator_never_moves() {
    let (mut est, s) = bundled_estimator();
    est.disable();
    let start = est.state().clone();
    let mut updates = 0;
    drive(&mut est, &s, &s.theta_true.clone(), 15, 3, |e, _, _| {
        updates += e.state().updates;
        assert_eq!(e.state().theta_hat, start.theta_hat);
        assert_eq!(e.state().fss, start.fss);
        assert_eq!(e.state().bound, start.bound);
    });
    assert_eq!(updates, 0);
}

#[test]
fn wrong_shapes_are_rejected() {
    let s = common::bundled();
    let mut cfg: EstimatorConfig = s.estimator_config();
    cfg.gamma0 = DMatrix::identity(3, 3);
    assert!(Estimator::new(s.model.clone(), cfg, &s.x0).is_err());
    let mut cfg = s.estimator_config();
    cfg.ke = DMatrix::identity(2, 2) * 1.5;
    assert!(Estimator::new(s.model.clone(), cfg, &s.x0).is_err());
    let mut cfg = s.estimator_config();
    cfg.forgetting = 0.0;
    assert!(Estimator::new(s.model.clone(), cfg, &s.x0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn truth_stays_in_the_nested_sets(angle in 0.0f64..std::f64::consts::TAU, radius in 0.0f64..1.0, seed in 0u64..1000) {
        let (mut est, s) = bundled_estimator();
        let theta = DVector::from_vec(vec![radius * angle.cos(), radius * angle.sin()]);
        let bound0 = est.state().bound;
        let mut prev = est.state().fss.clone();
        let mut ok = true;
        drive(&mut est, &s, &theta, 25, seed, |e, _, _| {
            let st = e.state();
            let err = &theta - &st.theta_hat;
            ok &= st.fss.contains(&theta, 1e-9);
            ok &= err.dot(&(&st.gamma * &err)) <= st.bound * (1.0 + 1e-12) + 1e-15;
            ok &= st.fss.vertices().unwrap().points.iter().all(|v| prev.contains(v, 1e-9));
            ok &= st.bound == (0..st.updates).fold(bound0, |b, _| b * 0.5);
            prev = st.fss.clone();
        });
        prop_assert!(ok);
    }
}
