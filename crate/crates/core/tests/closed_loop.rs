use proptest::prelude::*;

use quadsmc::attitude::{UnitQuat, Vec3};
use quadsmc::dynamics::DisturbanceModel;
use quadsmc::sim::{
    compute_metrics, reduced_solution, run, run_partial, Scenario, REACHING_THRESHOLD,
};
use quadsmc::trajectory::TrajectorySpec;
use quadsmc::validation::{derivative_oracles, settling_oracle};

fn quiet_reference() -> Scenario {
    let mut sc = Scenario::reference();
    sc.disturbance = DisturbanceModel::None;
    sc
}

#[test]
fn reference_trace_is_complete_and_finite() {
    let sc = Scenario::reference();
    let trace = run(&sc).unwrap();
    assert_eq!(trace.len(), 30_001);
    for (k, r) in trace.records.iter().enumerate() {
        assert_eq!(r.t, k as f64 * sc.dt);
        assert!(r.state.is_finite() && r.lyapunov.is_finite());
        assert!((r.state.attitude.norm() - 1.0).abs() <= 1e-12);
    }
    let m = compute_metrics(&trace, &sc);
    assert!(m.reaching_time.is_some());
    assert!(m.settling_time.iter().all(|t| t.is_some()));
}

#[test]
fn runs_are_repeatable() {
    let sc = Scenario::reference();
    assert_eq!(run(&sc).unwrap(), run(&sc).unwrap());
}

#[test]
fn disturbance_changes_the_trace_only_after_the_first_sample() {
    let with = run(&Scenario::reference()).unwrap();
    let without = run(&quiet_reference()).unwrap();
    assert_eq!(with.records[0].state, without.records[0].state);
    assert_eq!(with.records[0].control, without.records[0].control);
    assert_ne!(with.records[1].state, without.records[1].state);
    for tr in [&with, &without] {
        let last = tr.records.last().unwrap();
        assert!(last.control.diag.errors.position.norm() < 1e-3);
    }
}

#[test]
fn sliding_variable_stays_in_band_after_reaching() {
    let sc = quiet_reference();
    let trace = run(&sc).unwrap();
    let m = compute_metrics(&trace, &sc);
    let t_r = m.reaching_time.expect("manifold reached");
    let band = m.sliding_band.unwrap();
    assert!(
        band < 5e-3,
        "sup |s| after first |s| < {REACHING_THRESHOLD} at t = {t_r} s is {band:e}"
    );
}

#[test]
fn on_manifold_errors_follow_the_reduced_flow() {
    let sc = quiet_reference();
    let trace = run(&sc).unwrap();
    let recs = &trace.records;
    let Some(k0) = recs
        .iter()
        .position(|r| r.control.diag.sliding.s.norm() < REACHING_THRESHOLD)
    else {
        panic!("manifold never reached");
    };
    let eps = sc.gains.boundary_layer;
    let p0 = recs[k0].control.diag.errors.position;
    for r in &recs[k0..] {
        let tau = r.t - recs[k0].t;
        for i in 0..3 {
            let bound = reduced_solution(p0[i], sc.gains.k_s, sc.gains.beta_t, tau).abs();
            if bound <= eps {
                continue;
            }
            let p = r.control.diag.errors.position[i].abs();
            assert!(p <= 1.1 * bound, "axis {i} at t = {}: |p~| = {p:e} > 1.1 x {bound:e}", r.t);
        }
    }
}

#[test]
fn derivative_oracles_hold_without_disturbance() {
    let sc = quiet_reference();
    let trace = run(&sc).unwrap();
    let d = derivative_oracles(&sc, &trace, 5, 3e-5);
    for (name, v, tol) in d.entries() {
        assert!(v <= tol, "{name}: {v:e} > {tol:e}");
    }
}

#[test]
fn derivative_oracles_hold_on_a_climbing_circle() {
    let mut sc = quiet_reference();
    sc.trajectory = TrajectorySpec::Circle {
        center: [0.0, 0.0, -3.0],
        radius: 1.5,
        rate: 0.8,
        climb_rate: -0.2,
    };
    sc.t_end = 8.0;
    let trace = run(&sc).unwrap();
    let d = derivative_oracles(&sc, &trace, 4, 3e-5);
    assert!(d.points > 1500);
    for (name, v, tol) in d.entries() {
        assert!(v <= tol, "{name}: {v:e} > {tol:e}");
    }
}

#[test]
fn unwinding_flip_keeps_the_error_in_the_upper_hemisphere() {
    let mut sc = quiet_reference();
    sc.gains.unwinding_flip = true;
    sc.t_end = 5.0;
    sc.initial.attitude = UnitQuat::from_axis_angle(&Vec3::new(0.0, 0.0, 1.0), 3.0);
    let trace = run(&sc).unwrap();
    assert!(trace
        .records
        .iter()
        .all(|r| r.control.diag.errors.attitude.scalar() >= 0.0));
}

fn axis_angle() -> impl Strategy<Value = UnitQuat> {
    (
        prop::array::uniform3(-1.0..1.0f64),
        0.0..0.6f64,
    )
        .prop_filter("axis", |(a, _)| Vec3::from(*a).norm() > 0.1)
        .prop_map(|(a, ang)| UnitQuat::from_axis_angle(&Vec3::from(a), ang))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn derivative_oracles_hold_from_random_starts(
        offset in prop::array::uniform3(-1.0..1.0f64),
        q0 in axis_angle(),
    ) {
        let mut sc = quiet_reference();
        sc.t_end = 3.0;
        sc.initial.position = Vec3::from(offset);
        sc.initial.attitude = q0;
        let (trace, err) = run_partial(&sc);
        prop_assume!(err.is_none());
        let d = derivative_oracles(&sc, &trace, 20, 3e-5);
        for (name, v, tol) in d.entries() {
            prop_assert!(v <= tol, "{}: {:e} > {:e}", name, v, tol);
        }
    }

    #[test]
    fn scalar_flow_matches_closed_form(
        p0 in prop_oneof![-3.0..-0.01f64, 0.01..3.0f64],
        k in 1.0..8.0f64,
        beta in 0.3..0.95f64,
    ) {
        let st = settling_oracle(p0, k, beta, 1e-5, 1e-3, 1e-3);
        prop_assert!(st.max_deviation < 1e-3, "{:?}", st);
        // hitting |p| < 1e-3 happens no later than the closed-form settling time
        prop_assert!(st.hit_time <= st.bound + 1e-5, "{:?}", st);
    }
}
