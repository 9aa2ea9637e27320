//! Numerical self-checks: algebraic identities, extraction round-trip,
//! finite-difference oracles for every analytic derivative, the scalar
//! settling-time oracle and the Lyapunov monitor.

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde::Serialize;

use crate::attitude::{qbar, quat_error, skew, UnitQuat, Vec3, Vec4, E_Z};
use crate::controller::{control_step_with, desired_attitude, thrust_of, ControlOutput};
use crate::dynamics::{state_derivative, DisturbanceModel, RigidBodyParams, VehicleState};
use crate::sim::{lyapunov_increases, run, try_rk4_step, Scenario, SimTrace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<31} value={:.3e} tol={:.1e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance,
            self.detail
        )
    }
}

fn random_quat(rng: &mut StdRng) -> UnitQuat {
    loop {
        let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2: f64 = a.iter().map(|x| x * x).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            return UnitQuat::from_array(a).unwrap();
        }
    }
}

/// Largest `‖(R(Q)ᵀ − R(Q_d)ᵀ) e_z − 2 R(Q)ᵀ [q̄]× q̃‖` over random pairs.
/// `qbar_fn` is injectable so a corrupted variant can be shown to fail.
pub fn thrust_axis_identity_residual(samples: usize, seed: u64, qbar_fn: fn(&UnitQuat) -> Vec3) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let q = random_quat(&mut rng);
        let qd = random_quat(&mut rng);
        let err = quat_error(&qd, &q);
        let rt = q.rotation().transpose();
        let lhs = (rt - qd.rotation().transpose()) * E_Z;
        let rhs = 2.0 * rt * skew(&qbar_fn(&err)) * err.vector();
        worst = worst.max((lhs - rhs).norm());
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtractionReport {
    /// Largest `‖−(T/m) R(Q_d)ᵀ e_z + g e_z − F‖`.
    pub force_residual: f64,
    /// Largest `|‖Q_d‖ − 1|` before normalization.
    pub norm_deviation: f64,
    pub samples: usize,
    pub rejected: usize,
}

/// Draws `samples` feasible virtual forces and reconstructs each from the
/// extracted thrust and attitude.
pub fn extraction_round_trip(samples: usize, seed: u64, p: &RigidBodyParams) -> ExtractionReport {
    let tol = crate::controller::Tolerances::default();
    let mut rng = StdRng::seed_from_u64(seed);
    let g = p.gravity();
    let m = p.mass();
    let mut rep = ExtractionReport {
        force_residual: 0.0,
        norm_deviation: 0.0,
        samples: 0,
        rejected: 0,
    };
    while rep.samples < samples {
        let f = Vec3::from_fn(|_, _| rng.random_range(-3.0 * g..3.0 * g));
        let (thrust, qd) = match thrust_of(&f, p, &tol).and_then(|t| Ok((t, desired_attitude(&f, t, p, &tol)?))) {
            Ok(x) => x,
            Err(_) => {
                rep.rejected += 1;
                continue;
            }
        };
        // raw components, before the constructor normalizes them
        let q0 = ((m / (2.0 * thrust)) * (g - f.z) + 0.5).sqrt();
        let raw = Vec4::new(m * f.y / (2.0 * thrust * q0), -m * f.x / (2.0 * thrust * q0), 0.0, q0);
        rep.norm_deviation = rep.norm_deviation.max((raw.norm() - 1.0).abs());
        let back = -(thrust / m) * qd.rotation().transpose() * E_Z + g * E_Z;
        rep.force_residual = rep.force_residual.max((back - f).norm());
        rep.samples += 1;
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SettlingReport {
    /// First time `|p| < threshold` when integrating `ṗ = −k |p|^β sgn(p)`.
    pub hit_time: f64,
    /// `|p0|^(1−β) / (k (1−β))`.
    pub bound: f64,
    /// Largest gap to the closed-form solution while `|p|` exceeds `floor`.
    pub max_deviation: f64,
}

/// Integrates the scalar reduced dynamics with RK4 at step `h`.
pub fn settling_oracle(p0: f64, k: f64, beta: f64, h: f64, threshold: f64, floor: f64) -> SettlingReport {
    let f = |p: f64| -k * p.abs().powf(beta) * p.signum();
    let bound = crate::sim::settling_time_bound(p0, k, beta);
    let mut p = p0;
    let mut t = 0.0;
    let mut max_deviation = 0.0f64;
    let limit = 10.0 * bound + 1.0;
    while p.abs() >= threshold && t < limit {
        if p.abs() > floor {
            let exact = crate::sim::reduced_solution(p0, k, beta, t);
            max_deviation = max_deviation.max((p - exact).abs());
        }
        let k1 = f(p);
        let k2 = f(p + 0.5 * h * k1);
        let k3 = f(p + 0.5 * h * k2);
        let k4 = f(p + h * k3);
        let next = p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        // the flow stops at zero; RK4 stages may overshoot
        p = if next.signum() != p.signum() { 0.0 } else { next };
        t += h;
    }
    SettlingReport {
        hit_time: t,
        bound,
        max_deviation,
    }
}

/// Worst finite-difference disagreement per analytic derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DerivativeReport {
    pub s_dot: f64,
    pub s_ddot: f64,
    pub force_dot: f64,
    pub force_ddot: f64,
    pub desired_kinematics: f64,
    pub desired_omega_dot: f64,
    pub psi_dot: f64,
    pub attitude_error_rate: f64,
    pub points: usize,
    /// Stencils dropped because a position error crosses a boundary-layer edge.
    pub skipped: usize,
}

impl DerivativeReport {
    /// `(name, worst error, tolerance)` per derivative.
    pub fn entries(&self) -> [(&'static str, f64, f64); 8] {
        [
            ("s_dot", self.s_dot, 1e-4),
            ("s_ddot", self.s_ddot, 1e-3),
            ("force_dot", self.force_dot, 1e-4),
            ("force_ddot", self.force_ddot, 1e-3),
            ("desired_kinematics", self.desired_kinematics, 1e-5),
            ("desired_omega_dot", self.desired_omega_dot, 1e-4),
            ("psi_dot", self.psi_dot, 1e-3),
            ("attitude_error_rate", self.attitude_error_rate, 1e-4),
        ]
    }
}

fn layer_class(p_err: &Vec3, eps: f64) -> [i8; 3] {
    p_err.map(|p| {
        if p >= eps {
            1
        } else if p <= -eps {
            -1
        } else {
            0
        }
    })
    .into()
}

/// Checks the controller's analytic derivatives at every `stride`-th sample
/// of `trace`. From each logged state the nominal closed loop (continuous
/// control, no disturbance) is integrated to `±h` and `±2h`, and five-point
/// central differences of the controller outputs are compared with the
/// analytic values at the centre.
pub fn derivative_oracles(sc: &Scenario, trace: &SimTrace, stride: usize, h: f64) -> DerivativeReport {
    let field = |tau: f64, x: &VehicleState| {
        let r = sc.trajectory.eval(tau);
        control_step_with(x, &r, &sc.gains, &sc.params, &sc.tolerances)
            .map(|c| state_derivative(x, &c.command, &Vec3::zeros(), &sc.params))
    };
    let eval = |t: f64, x: &VehicleState| -> Option<ControlOutput> {
        control_step_with(x, &sc.trajectory.eval(t), &sc.gains, &sc.params, &sc.tolerances).ok()
    };
    // controller outputs at t + j h, j = -2..=2
    let stencil = |t: f64, x0: &VehicleState| -> Option<[ControlOutput; 5]> {
        let mut out = [eval(t, x0)?; 5];
        for dir in [1.0, -1.0] {
            let mut x = *x0;
            for j in 1..=2 {
                let tau = t + dir * (j - 1) as f64 * h;
                x = try_rk4_step(&x, tau, dir * h, field).ok()??;
                out[(2 + dir as i64 * j) as usize] = eval(t + dir * j as f64 * h, &x)?;
            }
        }
        Some(out)
    };
    let mut rep = DerivativeReport::default();
    let eps = sc.gains.boundary_layer;
    for rec in trace.records.iter().step_by(stride.max(1)) {
        let Some(c) = stencil(rec.t, &rec.state) else {
            rep.skipped += 1;
            continue;
        };
        let class = layer_class(&c[2].diag.errors.position, eps);
        if c.iter().any(|o| layer_class(&o.diag.errors.position, eps) != class) {
            rep.skipped += 1;
            continue;
        }
        let d = c.map(|o| o.diag);
        let d1v = |f: &dyn Fn(usize) -> Vec4| (f(0) - 8.0 * f(1) + 8.0 * f(3) - f(4)) / (12.0 * h);
        let d1 = |f: &dyn Fn(usize) -> Vec3| (f(0) - 8.0 * f(1) + 8.0 * f(3) - f(4)) / (12.0 * h);
        let d2 = |f: &dyn Fn(usize) -> Vec3| {
            (-f(0) + 16.0 * f(1) - 30.0 * f(2) + 16.0 * f(3) - f(4)) / (12.0 * h * h)
        };
        let c0 = &d[2];
        let worse = |acc: &mut f64, v: f64| *acc = acc.max(v);

        worse(&mut rep.s_dot, (d1(&|i| d[i].sliding.s) - c0.sliding.s_dot).amax());
        worse(&mut rep.s_ddot, (d2(&|i| d[i].sliding.s) - c0.sliding.s_ddot).amax());
        worse(&mut rep.force_dot, (d1(&|i| d[i].force) - c0.force_dot).amax());
        worse(&mut rep.force_ddot, (d2(&|i| d[i].force) - c0.force_ddot).amax());
        let qd_rate = c0.desired_attitude.rate(&c0.desired_omega);
        worse(
            &mut rep.desired_kinematics,
            (d1v(&|i| d[i].desired_attitude.to_vec4()) - qd_rate).amax(),
        );
        worse(
            &mut rep.desired_omega_dot,
            (d1(&|i| d[i].desired_omega) - c0.desired_omega_dot).amax(),
        );
        worse(&mut rep.psi_dot, (d1(&|i| d[i].psi) - c0.psi_dot).amax());
        worse(
            &mut rep.attitude_error_rate,
            (d1v(&|i| d[i].errors.attitude.to_vec4()) - c0.attitude_error_rate).amax(),
        );
        rep.points += 1;
    }
    rep
}

/// Lyapunov increases along a disturbance-free copy of `sc`.
pub fn lyapunov_monitor(sc: &Scenario) -> Result<(usize, f64), crate::sim::SimError> {
    let mut quiet = sc.clone();
    quiet.disturbance = DisturbanceModel::None;
    let trace = run(&quiet)?;
    Ok(lyapunov_increases(trace.records.iter().skip(1).map(|r| r.lyapunov)))
}

/// Options for [`run_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    /// Multiplies every tolerance.
    pub tol_scale: f64,
    pub random_samples: usize,
    pub seed: u64,
    /// Sample stride for the derivative oracles.
    pub stride: usize,
    /// Finite-difference step (s) for the derivative oracles.
    pub fd_step: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            tol_scale: 1.0,
            random_samples: 10_000,
            seed: 0x5eed,
            stride: 10,
            fd_step: 3e-5,
        }
    }
}

/// Runs every check against the reference scenario.
pub fn run_suite(opts: &SuiteOptions) -> Vec<CheckResult> {
    let s = opts.tol_scale;
    let mut out = Vec::new();

    let r = thrust_axis_identity_residual(opts.random_samples, opts.seed, qbar);
    out.push(CheckResult::at_most(
        "thrust_axis_identity",
        r,
        1e-10 * s,
        format!("{} random attitude pairs", opts.random_samples),
    ));

    let sc = Scenario::reference();
    let ex = extraction_round_trip(opts.random_samples, opts.seed, &sc.params);
    out.push(CheckResult::at_most(
        "extraction_round_trip",
        ex.force_residual,
        1e-8 * s,
        format!("{} feasible forces, {} rejected", ex.samples, ex.rejected),
    ));
    out.push(CheckResult::at_most(
        "extraction_unit_norm",
        ex.norm_deviation,
        1e-9 * s,
        format!("{} feasible forces", ex.samples),
    ));

    let st = settling_oracle(1.0, 5.0, 0.5, 1e-6, 1e-6, 1e-3);
    out.push(CheckResult::at_most(
        "settling_time",
        (st.hit_time - st.bound).abs(),
        2e-3 * s,
        format!("hit {:.6} s, bound {:.6} s", st.hit_time, st.bound),
    ));
    out.push(CheckResult::at_most(
        "settling_closed_form",
        st.max_deviation,
        1e-3 * s,
        "scalar flow vs closed form".into(),
    ));

    match run(&sc) {
        Ok(trace) => {
            let d = derivative_oracles(&sc, &trace, opts.stride, opts.fd_step);
            for (name, value, tol) in d.entries() {
                out.push(CheckResult::at_most(
                    &format!("derivative_{name}"),
                    value,
                    tol * s,
                    format!("{} points, {} skipped", d.points, d.skipped),
                ));
            }
        }
        Err(e) => out.push(CheckResult::at_most("derivative_oracles", f64::INFINITY, 0.0, e.to_string())),
    }

    match lyapunov_monitor(&sc) {
        Ok((count, worst)) => out.push(CheckResult {
            name: "lyapunov_monotone".into(),
            value: count as f64,
            tolerance: 0.0,
            passed: count == 0,
            detail: format!("largest step increase {worst:.3e}"),
        }),
        Err(e) => out.push(CheckResult::at_most("lyapunov_monotone", f64::INFINITY, 0.0, e.to_string())),
    }
    out
}
