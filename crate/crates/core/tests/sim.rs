mod common;

use atmpc_core::sim::{
    compare_modes, export_comparison, export_run, parse_scenario, performance_from_csv,
    run_closed_loop, write_trace_csv, DEFAULT_SNAPSHOTS, ORDERING_TOL,
};
use atmpc_core::{Mode, SimError};
use nalgebra::{DMatrix, DVector};

fn schema_path(text: &str) -> String {
    match parse_scenario(text) {
        Err(SimError::Schema { path, .. }) => path,
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn bundled_scenario_has_the_published_parameters() {
    let s = common::bundled();
    assert_eq!(s.config.name, "paper_sec5");
    assert_eq!(
        s.model.base_a,
        DMatrix::from_row_slice(2, 2, &[0.42, -0.28, 0.02, 0.6])
    );
    assert_eq!(s.model.base_b, DMatrix::from_row_slice(2, 1, &[0.3, -0.4]));
    assert_eq!(s.model.delta_a[1], -&s.model.delta_a[0]);
    assert_eq!(s.model.delta_b[1], &s.model.delta_b[0] * -1.5);
    assert_eq!(s.theta_true, DVector::from_vec(vec![-0.2, 0.5]));
    assert_eq!(
        s.constraints.k,
        DMatrix::from_row_slice(1, 2, &[-0.4187, 1.1562])
    );
    assert_eq!(s.x0, DVector::from_vec(vec![8.0, 8.0]));
    assert_eq!(s.config.controller.horizon, 10);
    let e = s.estimator_config();
    assert_eq!(e.forgetting, 0.5);
    assert_eq!(e.gamma0, DMatrix::identity(2, 2) * 0.15);
    assert_eq!((e.eps_x, e.eps_r), (0.001, 0.001));
    assert_eq!(s.steps(), 20);
    // |x|∞ ≤ 17 and |u| ≤ 4 as four state rows and two input rows.
    assert_eq!(s.constraints.n_con(), 6);
}

#[test]
fn missing_gain_is_synthesized_by_lq() {
    let text = common::bundled_text().replace("gain = [[-0.4187, 1.1562]]\n", "");
    let s = parse_scenario(&text).unwrap();
    let k = s.constraints.k.clone();
    // Riccati value iteration on the nominal model, with u = Kx.
    let (a, b) = (&s.model.base_a, &s.model.base_b);
    let mut p = s.q.clone();
    let mut k_ref = DMatrix::zeros(1, 2);
    for _ in 0..2000 {
        let s_inv = (&s.r + b.transpose() * &p * b).try_inverse().unwrap();
        k_ref = -(&s_inv * b.transpose() * &p * a);
        p = &s.q + a.transpose() * &p * a + a.transpose() * &p * b * &k_ref;
    }
    assert!((&k - &k_ref).amax() < 1e-9, "{k} vs {k_ref}");
    let explicit =
        parse_scenario(&common::bundled_text().replace("[[-0.4187, 1.1562]]", "\"synthesize\""))
            .unwrap();
    assert_eq!(explicit.constraints.k, k);
}

#[test]
fn invalid_scenarios_name_the_offending_field() {
    let base = common::bundled_text();
    assert_eq!(
        schema_path(&base.replace("theta_true = [-0.2, 0.5]", "theta_true = [0.9, 0.9]")),
        "uncertainty.theta_true"
    );
    assert_eq!(
        schema_path(&base.replace("x0 = [8.0, 8.0]", "x0 = [17.0, 0.0]")),
        "simulation.x0"
    );
    assert_eq!(
        schema_path(&base.replace("horizon = 10", "horizon = 10\nhorizn = 3")),
        "controller.horizn"
    );
    assert_eq!(
        schema_path(&base.replace("forgetting = 0.5", "forgetting = \"half\"")),
        "estimator.forgetting"
    );
    assert_eq!(
        schema_path(&base.replace("gain = [[-0.4187, 1.1562]]", "gain = \"lqr\"")),
        "controller.gain"
    );
    assert_eq!(
        schema_path(&base.replace("u_max = [4.0]", "u_max = [4.0, 1.0]")),
        "constraints.x_max"
    );
    assert!(matches!(
        atmpc_core::sim::load_scenario("/nonexistent/scenario.toml"),
        Err(SimError::Io { .. })
    ));
}

#[test]
fn runs_are_deterministic_and_exports_are_byte_identical() {
    let s = common::bundled();
    let a = run_closed_loop(&s, Mode::Adaptive).unwrap();
    let b = run_closed_loop(&s, Mode::Adaptive).unwrap();
    assert_eq!(a, b);
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    export_run(d1.path(), &a, 2, &DEFAULT_SNAPSHOTS).unwrap();
    export_run(d2.path(), &b, 2, &DEFAULT_SNAPSHOTS).unwrap();
    for f in [
        "trace.csv",
        "report.json",
        "sets_k0.json",
        "sets_k3.json",
        "sets_k7.json",
        "sets_k20.json",
    ] {
        assert_eq!(
            std::fs::read(d1.path().join(f)).unwrap(),
            std::fs::read(d2.path().join(f)).unwrap(),
            "{f}"
        );
    }

    // The exported trace reproduces the reported index.
    let jp = performance_from_csv(&d1.path().join("trace.csv"), &s.q, &s.r, s.steps()).unwrap();
    assert!(
        (jp - a.report.jp).abs() <= 1e-12 * a.report.jp.max(1.0),
        "{jp} vs {}",
        a.report.jp
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d1.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["jp"].as_f64().unwrap(), a.report.jp);
    assert_eq!(report["mode"], "adaptive");

    // Snapshots nest: k = 20 ⊆ 7 ⊆ 3 ⊆ 0.
    let snaps: Vec<_> = [0usize, 3, 7, 20]
        .iter()
        .map(|k| a.snapshots.iter().find(|s| s.k == *k).unwrap())
        .collect();
    for w in snaps.windows(2) {
        assert!(
            w[1].vertices.iter().all(|v| w[0].set.contains(v, 1e-9)),
            "k = {} in k = {}",
            w[1].k,
            w[0].k
        );
    }
    assert!(snaps[3].vertices.len() >= 3);
}

#[test]
fn empty_trace_gives_a_header_only_csv() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("trace.csv");
    write_trace_csv(&path, &[], 2, 1, 2).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text,
        "k,x1,x2,u1,stage,cost,horizon_ext,gamma,n_c,qp_iterations,updated,lyapunov_residual,theta_hat1,theta_hat2,bound\n"
    );
}

#[test]
fn trace_index_follows_its_definition() {
    let s = common::toy();
    let run = run_closed_loop(&s, Mode::Adaptive).unwrap();
    assert_eq!(run.trace.len(), s.steps() + 1);
    let total: f64 = run
        .trace
        .iter()
        .map(|r| r.x.dot(&(&s.q * &r.x)) + r.u.dot(&(&s.r * &r.u)))
        .sum();
    assert!((run.report.jp - total / s.steps() as f64).abs() < 1e-12);
    assert!(run.report.monitors.passed());
    assert!(run.report.max_constraint_violation <= 1e-8);
}

#[test]
fn modes_coincide_without_uncertainty() {
    let text = common::bundled_text()
        .replace(
            "[[-0.12, -0.08], [-0.12, -0.17]]",
            "[[0.0, 0.0], [0.0, 0.0]]",
        )
        .replace("[[0.12, 0.08], [0.12, 0.17]]", "[[0.0, 0.0], [0.0, 0.0]]")
        .replace("[[0.04], [-0.08]]", "[[0.0], [0.0]]")
        .replace("[[-0.06], [0.12]]", "[[0.0], [0.0]]");
    let s = parse_scenario(&text).unwrap();
    let cmp = compare_modes(&s).unwrap();
    let jp: Vec<f64> = cmp.runs.iter().map(|r| r.report.jp).collect();
    assert!(
        (jp[0] - jp[1]).abs() <= 1e-9 && (jp[1] - jp[2]).abs() <= 1e-9,
        "{jp:?}"
    );
    cmp.check_ordering().unwrap();
}

#[test]
fn centered_truth_starts_identically_in_every_mode() {
    let s = common::with_truth(&common::bundled(), &DVector::zeros(2));
    let a = run_closed_loop(&s, Mode::Adaptive).unwrap();
    let r = run_closed_loop(&s, Mode::Robust).unwrap();
    assert_eq!(a.trace[0].x, r.trace[0].x);
    assert_eq!(a.trace[0].u, r.trace[0].u);
    assert_eq!(a.trace[0].cost, r.trace[0].cost);
}

#[test]
fn comparison_export_and_ordering() {
    let s = common::bundled();
    let cmp = compare_modes(&s).unwrap();
    cmp.check_ordering().unwrap();
    let d = tempfile::tempdir().unwrap();
    export_comparison(d.path(), &cmp, 2, &DEFAULT_SNAPSHOTS).unwrap();
    for m in Mode::ALL {
        assert!(d.path().join(m.name()).join("report.json").exists());
    }
    let summary = std::fs::read_to_string(d.path().join("summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 4);

    // A tampered comparison must report the violation.
    let mut bad = cmp.clone();
    bad.runs[0].report.jp = bad.runs[2].report.jp + 1.0;
    assert!(matches!(
        bad.check_ordering(),
        Err(SimError::OrderingViolation(_))
    ));
}

#[test]
fn ordering_holds_for_random_truths() {
    let s = common::bundled();
    for (i, theta) in common::random_truths(&s, 20).iter().enumerate() {
        let cmp = compare_modes(&common::with_truth(&s, theta)).unwrap();
        let jp = |m| cmp.run(m).unwrap().report.jp;
        assert!(
            jp(Mode::Adaptive) <= jp(Mode::Simplified) + ORDERING_TOL
                && jp(Mode::Simplified) <= jp(Mode::Robust) + ORDERING_TOL,
            "draw {i} θ* = {theta:?}: {} {} {}",
            jp(Mode::Adaptive),
            jp(Mode::Simplified),
            jp(Mode::Robust)
        );
    }
}
