//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line.

use std::path::PathBuf;
use std::time::Instant;

use quadsmc::config::ConfigFile;
use quadsmc::controller::ControlOutput;
use quadsmc::sim::{compute_metrics, run, run_partial, Scenario, SimTrace};
use quadsmc::trace::write_trace;
use quadsmc::validation::{
    derivative_oracles, extraction_round_trip, settling_oracle, thrust_axis_identity_residual,
};
use quadsmc::{attitude::qbar, VehicleState};

fn config(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ConfigFile::load(&path)
        .and_then(|c| c.to_scenario())
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn report(id: u32, passed: bool, summary: String) {
    println!("{} criterion {id}: {summary}", if passed { "PASS" } else { "FAIL" });
}

fn p_err(c: &ControlOutput) -> f64 {
    c.diag.errors.position.norm()
}

#[test]
fn criterion_1_reference_scenario_converges() {
    let sc = config("paper_v.cfg");
    let start = Instant::now();
    let result = run(&sc);
    let wall = start.elapsed().as_secs_f64();
    let trace = match result {
        Ok(t) => t,
        Err(e) => {
            report(1, false, format!("aborted: {e}"));
            panic!("reference scenario aborted: {e}");
        }
    };
    let last = trace.records.last().unwrap();
    let p_final = p_err(&last.control);
    let q_final = last.control.diag.errors.attitude.vector().norm();
    let m = compute_metrics(&trace, &sc);
    let band = m.sliding_band.unwrap_or(f64::INFINITY);
    let ok = trace.len() == 30_001
        && p_final < 0.05
        && q_final < 0.02
        && m.reaching_time.is_some()
        && band < 5e-3
        && wall < 10.0;
    report(
        1,
        ok,
        format!(
            "|P~(30)|={p_final:.2e} |q~(30)|={q_final:.2e} t_r={:?} sup|s| after t_r={band:.2e} wall={wall:.2}s",
            m.reaching_time
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_2_settling_time_oracle() {
    let st = settling_oracle(1.0, 5.0, 0.5, 1e-6, 1e-6, 1e-3);
    let ok = (st.hit_time - 0.4).abs() <= 2e-3 && (st.bound - 0.4).abs() < 1e-12;
    report(
        2,
        ok,
        format!("|p|<1e-6 at t={:.5} s, closed-form t_s={:.5} s", st.hit_time, st.bound),
    );
    assert!(ok);
}

#[test]
fn criterion_3_extraction_round_trip() {
    let p = quadsmc::RigidBodyParams::unit();
    let ex = extraction_round_trip(10_000, 3, &p);
    let ok = ex.samples == 10_000 && ex.force_residual < 1e-8;
    report(
        3,
        ok,
        format!(
            "max force residual {:.2e} over {} feasible samples",
            ex.force_residual, ex.samples
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_thrust_axis_identity() {
    let r = thrust_axis_identity_residual(10_000, 4, qbar);
    let ok = r < 1e-10;
    report(4, ok, format!("max residual {r:.2e} over 10000 attitude pairs"));
    assert!(ok);
}

#[test]
fn criterion_5_derivative_oracles() {
    let sc = config("paper_v.cfg");
    let trace = run(&sc).expect("reference run");
    let d = derivative_oracles(&sc, &trace, 1, 3e-5);
    let entries = d.entries();
    let ok = d.points > 29_000 && entries.iter().all(|(_, v, tol)| v <= tol);
    let detail: Vec<String> = entries
        .iter()
        .map(|(n, v, tol)| format!("{n}={v:.1e}/{tol:.0e}"))
        .collect();
    report(
        5,
        ok,
        format!("{} ({} points, {} skipped)", detail.join(" "), d.points, d.skipped),
    );
    assert!(ok);
}

#[test]
fn criterion_6_lyapunov_monotone_without_disturbance() {
    let sc = config("no_disturbance.cfg");
    let trace = run(&sc).expect("disturbance-free run");
    let m = compute_metrics(&trace, &sc);
    let violations = m.lyapunov_violations.expect("monitor enabled without disturbance");
    let ok = violations == 0;
    report(
        6,
        ok,
        format!(
            "{violations} increases beyond slack, largest {:.3e}",
            m.lyapunov_max_increase.unwrap_or(0.0)
        ),
    );
    assert!(ok);
}

fn sup_after(trace: &SimTrace, t0: f64) -> Option<f64> {
    trace
        .records
        .iter()
        .filter(|r| r.t > t0)
        .map(|r| p_err(&r.control))
        .reduce(f64::max)
}

#[test]
fn criterion_7_robust_term_rejects_disturbance() {
    let sc = config("paper_v.cfg");
    let trace = run(&sc).expect("reference run");
    let ts = compute_metrics(&trace, &sc).settling_bound;
    let robust = sup_after(&trace, ts).expect("run extends past t_s");

    let mut ablated = sc.clone();
    ablated.gains.beta = 0.0;
    ablated.enforce_robust_bound = false;
    let (abl_trace, abl_err) = run_partial(&ablated);
    // an aborted run has no bounded tail
    let ablated_sup = match abl_err {
        None => sup_after(&abl_trace, ts).expect("run extends past t_s"),
        Some(_) => f64::INFINITY,
    };
    let pre_abort = abl_trace.records.iter().map(|r| p_err(&r.control)).fold(0.0, f64::max);
    let ok = robust.is_finite() && robust < 0.05 && ablated_sup >= 10.0 * robust;
    report(
        7,
        ok,
        format!(
            "t_s={ts:.2}s sup|P~| robust={robust:.2e}, without robust term={ablated_sup:.2e} ({}; max before end {pre_abort:.2e})",
            abl_err.map_or("completed".to_string(), |e| e.to_string())
        ),
    );
    assert!(ok);
}

fn state_gap(a: &VehicleState, b: &VehicleState) -> f64 {
    ((a.position - b.position).norm_squared()
        + (a.velocity - b.velocity).norm_squared()
        + (a.attitude.to_vec4() - b.attitude.to_vec4()).norm_squared()
        + (a.omega - b.omega).norm_squared())
    .sqrt()
}

#[test]
fn criterion_8_rk4_convergence_order() {
    let base = config("paper_v.cfg");
    let traces: Vec<SimTrace> = [1, 2, 4]
        .iter()
        .map(|&n| {
            let mut sc = base.clone();
            sc.substeps = n;
            run(&sc).expect("run")
        })
        .collect();
    let gap = |a: &SimTrace, b: &SimTrace| {
        a.records
            .iter()
            .zip(&b.records)
            .map(|(x, y)| state_gap(&x.state, &y.state))
            .fold(0.0, f64::max)
    };
    let e1 = gap(&traces[0], &traces[1]);
    let e2 = gap(&traces[1], &traces[2]);
    let order = (e1 / e2).log2();
    let final_gap = state_gap(
        traces[0].final_state().unwrap(),
        traces[1].final_state().unwrap(),
    );
    let ok = order >= 3.5;
    report(
        8,
        ok,
        format!("observed order {order:.3} (sup gaps {e1:.2e}, {e2:.2e}; final-state gap {final_gap:.1e})"),
    );
    assert!(ok);
}

#[test]
fn criterion_9_trace_is_deterministic() {
    let bytes = || {
        let sc = config("paper_v.cfg");
        let mut buf = Vec::new();
        write_trace(&run(&sc).expect("run"), &mut buf).unwrap();
        buf
    };
    let (a, b) = (bytes(), bytes());
    let ok = !a.is_empty() && a == b;
    report(9, ok, format!("two runs, {} and {} CSV bytes, identical={}", a.len(), b.len(), a == b));
    assert!(ok);
}
