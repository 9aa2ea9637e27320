//! Fixed-step closed-loop simulation, trace logging and convergence metrics.
//!
//! By default the controller runs once per sample period `dt` and its command
//! is held over the whole period (zero-order hold). The plant is integrated
//! with classical RK4 using `substeps` equal steps per period, so refining the
//! integrator never changes the control schedule. [`ControlUpdate::Continuous`]
//! instead re-evaluates the controller at every RK stage, which integrates the
//! continuous-time closed loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{Mat3, Vec3};
use crate::controller::{
    control_step_with, disturbance_estimate, ControlError, ControlOutput, GainError, Gains,
    Tolerances,
};
use crate::dynamics::{
    state_derivative, Command, DisturbanceModel, ParamError, RigidBodyParams, StateDerivative,
    VehicleState,
};
use crate::trajectory::{check_feasible, RefPoint, TrajectoryError, TrajectorySpec};

/// `‖s_t‖` below this counts as having reached the sliding manifold.
pub const REACHING_THRESHOLD: f64 = 1e-3;
/// Per-axis position band (m) used for settling times.
pub const SETTLING_BAND: f64 = 5e-3;
/// Relative slack allowed per step before a Lyapunov increase is counted.
pub const LYAPUNOV_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("end time {t_end} must be at least one step ({dt})")]
    BadHorizon { t_end: f64, dt: f64 },
    #[error("substeps must be at least 1")]
    NoSubsteps,
    #[error("initial state is not finite")]
    NonFiniteInitial,
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Gains(#[from] GainError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("reference trajectory is infeasible: {0}")]
    Infeasible(TrajectoryError),
    #[error("controller failed at t = {time} s: {source}")]
    Control { time: f64, source: ControlError },
    #[error("state became non-finite at t = {time} s")]
    NonFiniteState { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlUpdate {
    /// Command computed at the start of each period and held.
    #[default]
    Hold,
    /// Command recomputed at every integrator stage.
    Continuous,
}

/// Everything needed to reproduce one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub trajectory: TrajectorySpec,
    pub disturbance: DisturbanceModel,
    /// Declared per-axis disturbance bound `δ_f` (N).
    pub disturbance_bound: Vec3,
    pub params: RigidBodyParams,
    pub gains: Gains,
    /// Velocity-error margin (m/s) folded into the disturbance estimate.
    pub velocity_margin: f64,
    /// Enforce `β ≥ Δ̂ + β₀`. Off only for ablation runs.
    pub enforce_robust_bound: bool,
    pub tolerances: Tolerances,
    pub initial: VehicleState,
    pub t_end: f64,
    pub dt: f64,
    pub substeps: u32,
    pub control_update: ControlUpdate,
}

impl Scenario {
    /// Lissajous climb from rest at the origin with a tilted initial attitude,
    /// unit mass and inertia, reference gains, 0.01 N wind, 30 s at 1 kHz.
    pub fn reference() -> Self {
        let params = RigidBodyParams::unit();
        let disturbance = DisturbanceModel::reference_wind();
        let disturbance_bound = disturbance.peak();
        let velocity_margin = 1.0;
        let delta_hat = disturbance_estimate(&disturbance_bound, params.mass(), 5.0, velocity_margin);
        Self {
            trajectory: TrajectorySpec::reference(),
            disturbance,
            disturbance_bound,
            params,
            gains: Gains::reference(delta_hat),
            velocity_margin,
            enforce_robust_bound: true,
            tolerances: Tolerances::default(),
            initial: VehicleState {
                position: Vec3::zeros(),
                velocity: Vec3::zeros(),
                attitude: crate::attitude::UnitQuat::from_array([0.1699, 0.3058, 0.1699, 0.9212])
                    .unwrap(),
                omega: Vec3::zeros(),
            },
            t_end: 30.0,
            dt: 1e-3,
            substeps: 1,
            control_update: ControlUpdate::Hold,
        }
    }

    pub fn delta_hat(&self) -> f64 {
        disturbance_estimate(
            &self.disturbance_bound,
            self.params.mass(),
            self.gains.k_s,
            self.velocity_margin,
        )
    }

    /// Number of logged samples, `t_end / dt + 1`.
    pub fn samples(&self) -> usize {
        (self.t_end / self.dt).round() as usize + 1
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ScenarioError::BadStep(self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(ScenarioError::BadHorizon {
                t_end: self.t_end,
                dt: self.dt,
            });
        }
        if self.substeps == 0 {
            return Err(ScenarioError::NoSubsteps);
        }
        if !self.initial.is_finite() {
            return Err(ScenarioError::NonFiniteInitial);
        }
        self.trajectory.validate()?;
        self.disturbance.validate()?;
        self.disturbance.check_bound(&self.disturbance_bound)?;
        self.gains.validate()?;
        if self.enforce_robust_bound {
            self.gains.check_robust(self.delta_hat())?;
        }
        Ok(())
    }
}

/// One logged sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub state: VehicleState,
    pub reference: RefPoint,
    pub control: ControlOutput,
    pub disturbance: Vec3,
    pub lyapunov: f64,
}

/// Uniformly sampled closed-loop history.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SimTrace {
    pub dt: f64,
    pub records: Vec<TraceRecord>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_state(&self) -> Option<&VehicleState> {
        self.records.last().map(|r| &r.state)
    }
}

/// One classical RK4 step of `field(t, x)`, with the quaternion renormalized
/// after each stage and after the update. `None` if the state leaves the
/// finite range.
pub fn rk4_step<F>(state: &VehicleState, t: f64, h: f64, mut field: F) -> Option<VehicleState>
where
    F: FnMut(f64, &VehicleState) -> StateDerivative,
{
    match try_rk4_step(state, t, h, |tau, x| Ok::<_, ()>(field(tau, x))) {
        Ok(x) => x,
        Err(()) => unreachable!(),
    }
}

/// [`rk4_step`] for a field that can fail. Field errors pass through;
/// `Ok(None)` signals a non-finite state.
pub fn try_rk4_step<F, E>(
    state: &VehicleState,
    t: f64,
    h: f64,
    mut field: F,
) -> Result<Option<VehicleState>, E>
where
    F: FnMut(f64, &VehicleState) -> Result<StateDerivative, E>,
{
    let k1 = field(t, state)?;
    let Some(x2) = state.advanced(&k1, 0.5 * h) else {
        return Ok(None);
    };
    let k2 = field(t + 0.5 * h, &x2)?;
    let Some(x3) = state.advanced(&k2, 0.5 * h) else {
        return Ok(None);
    };
    let k3 = field(t + 0.5 * h, &x3)?;
    let Some(x4) = state.advanced(&k3, h) else {
        return Ok(None);
    };
    let k4 = field(t + h, &x4)?;
    let combined = StateDerivative {
        position: (k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position) / 6.0,
        velocity: (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity) / 6.0,
        attitude: (k1.attitude + 2.0 * k2.attitude + 2.0 * k3.attitude + k4.attitude) / 6.0,
        omega: (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega) / 6.0,
    };
    Ok(state.advanced(&combined, h))
}

/// `L = k_q (1 − q̃0) + ½ Θᵀ J Θ + ½ s_tᵀ s_t`.
pub fn lyapunov_value(q_err0: f64, theta: &Vec3, s: &Vec3, inertia: &Mat3, k_q: f64) -> f64 {
    k_q * (1.0 - q_err0) + 0.5 * theta.dot(&(inertia * theta)) + 0.5 * s.dot(s)
}

fn lyapunov_of(out: &ControlOutput, sc: &Scenario) -> f64 {
    let d = &out.diag;
    lyapunov_value(
        d.errors.attitude.scalar(),
        &d.theta,
        &d.sliding.s,
        sc.params.inertia(),
        sc.gains.k_q,
    )
}

/// Runs the scenario to completion or to the first failure.
pub fn run(sc: &Scenario) -> Result<SimTrace, SimError> {
    match run_partial(sc) {
        (trace, None) => Ok(trace),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`run`], but hands back whatever was logged before a failure.
pub fn run_partial(sc: &Scenario) -> (SimTrace, Option<SimError>) {
    let mut trace = SimTrace {
        dt: sc.dt,
        records: Vec::new(),
    };
    if let Err(e) = sc.validate() {
        return (trace, Some(e.into()));
    }
    let report = check_feasible(&sc.trajectory, sc.t_end, 1000.0, sc.params.gravity());
    if let Err(e) = report.ensure() {
        return (trace, Some(SimError::Infeasible(e)));
    }

    let n = sc.samples();
    trace.records.reserve(n);
    let h = sc.dt / sc.substeps as f64;
    let mut state = sc.initial;
    for k in 0..n {
        let t = k as f64 * sc.dt;
        let reference = sc.trajectory.eval(t);
        let control = match control_step_with(&state, &reference, &sc.gains, &sc.params, &sc.tolerances)
        {
            Ok(c) => c,
            Err(source) => return (trace, Some(SimError::Control { time: t, source })),
        };
        let lyapunov = lyapunov_of(&control, sc);
        if !lyapunov.is_finite() || !control.command.thrust.is_finite() {
            return (trace, Some(SimError::NonFiniteState { time: t }));
        }
        trace.records.push(TraceRecord {
            t,
            state,
            reference,
            control,
            disturbance: sc.disturbance.force(t),
            lyapunov,
        });
        if k + 1 == n {
            break;
        }
        match advance(&state, t, h, &control.command, sc) {
            Ok(Some(next)) => state = next,
            Ok(None) => return (trace, Some(SimError::NonFiniteState { time: t })),
            Err(source) => return (trace, Some(SimError::Control { time: t, source })),
        }
    }
    (trace, None)
}

/// Integrates one control period starting at `t`.
fn advance(
    state: &VehicleState,
    t: f64,
    h: f64,
    held: &Command,
    sc: &Scenario,
) -> Result<Option<VehicleState>, ControlError> {
    let field = |tau: f64, x: &VehicleState| -> Result<StateDerivative, ControlError> {
        let f_dist = sc.disturbance.force(tau);
        match sc.control_update {
            ControlUpdate::Hold => Ok(state_derivative(x, held, &f_dist, &sc.params)),
            ControlUpdate::Continuous => {
                let r = sc.trajectory.eval(tau);
                let c = control_step_with(x, &r, &sc.gains, &sc.params, &sc.tolerances)?;
                Ok(state_derivative(x, &c.command, &f_dist, &sc.params))
            }
        }
    };
    let mut x = *state;
    for i in 0..sc.substeps {
        match try_rk4_step(&x, t + i as f64 * h, h, field)? {
            Some(next) => x = next,
            None => return Ok(None),
        }
    }
    Ok(Some(x))
}

/// Convergence figures extracted from a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// First time `‖s_t‖ < REACHING_THRESHOLD`.
    pub reaching_time: Option<f64>,
    /// Largest `‖s_t‖` from the reaching time on.
    pub sliding_band: Option<f64>,
    /// Per axis, the first time after which `|p̃_i|` stays inside `SETTLING_BAND`.
    pub settling_time: [Option<f64>; 3],
    /// `max_i |p̃_i(0)|^(1−β_t) / (k_st (1 − β_t))` for the ideal manifold dynamics.
    pub settling_bound: f64,
    pub max_position_error: f64,
    pub final_position_error: f64,
    pub final_velocity_error: f64,
    pub final_attitude_error: f64,
    pub final_omega_error: f64,
    /// Steps with `L(k+1) − L(k) > LYAPUNOV_SLACK · max(1, L(k))`, counted from
    /// the second sample on. Absent when a disturbance is active.
    pub lyapunov_violations: Option<usize>,
    pub lyapunov_max_increase: Option<f64>,
    pub samples: usize,
}

/// Settling-time bound of `ṗ = −k |p|^β sgn(p)` from `p0`.
pub fn settling_time_bound(p0: f64, k_s: f64, beta_t: f64) -> f64 {
    p0.abs().powf(1.0 - beta_t) / (k_s * (1.0 - beta_t))
}

/// Closed-form solution of `ṗ = −k |p|^β sgn(p)`.
pub fn reduced_solution(p0: f64, k_s: f64, beta_t: f64, t: f64) -> f64 {
    let base = p0.abs().powf(1.0 - beta_t) - k_s * (1.0 - beta_t) * t;
    if base <= 0.0 {
        0.0
    } else {
        p0.signum() * base.powf(1.0 / (1.0 - beta_t))
    }
}

pub fn compute_metrics(trace: &SimTrace, sc: &Scenario) -> Metrics {
    let recs = &trace.records;
    let s_norm: Vec<f64> = recs.iter().map(|r| r.control.diag.sliding.s.norm()).collect();
    let reach_idx = s_norm.iter().position(|&s| s < REACHING_THRESHOLD);
    let reaching_time = reach_idx.map(|i| recs[i].t);
    let sliding_band = reach_idx.map(|i| s_norm[i..].iter().cloned().fold(0.0, f64::max));

    let mut settling_time = [None; 3];
    for (axis, slot) in settling_time.iter_mut().enumerate() {
        let last_out = recs
            .iter()
            .rposition(|r| r.control.diag.errors.position[axis].abs() >= SETTLING_BAND);
        *slot = match last_out {
            None => recs.first().map(|r| r.t),
            Some(i) if i + 1 < recs.len() => Some(recs[i + 1].t),
            Some(_) => None,
        };
    }

    let settling_bound = recs
        .first()
        .map(|r| {
            r.control
                .diag
                .errors
                .position
                .iter()
                .map(|&p| settling_time_bound(p, sc.gains.k_s, sc.gains.beta_t))
                .fold(0.0, f64::max)
        })
        .unwrap_or(0.0);

    let (lyapunov_violations, lyapunov_max_increase) = if sc.disturbance.is_none() {
        let (count, worst) = lyapunov_increases(recs.iter().skip(1).map(|r| r.lyapunov));
        (Some(count), Some(worst))
    } else {
        (None, None)
    };

    let last = recs.last();
    let fin = |f: &dyn Fn(&TraceRecord) -> f64| last.map(f).unwrap_or(f64::NAN);
    Metrics {
        reaching_time,
        sliding_band,
        settling_time,
        settling_bound,
        max_position_error: recs
            .iter()
            .map(|r| r.control.diag.errors.position.norm())
            .fold(0.0, f64::max),
        final_position_error: fin(&|r| r.control.diag.errors.position.norm()),
        final_velocity_error: fin(&|r| r.control.diag.errors.velocity.norm()),
        final_attitude_error: fin(&|r| r.control.diag.errors.attitude.vector().norm()),
        final_omega_error: fin(&|r| r.control.diag.errors.omega.norm()),
        lyapunov_violations,
        lyapunov_max_increase,
        samples: recs.len(),
    }
}

/// Counts steps where a sampled Lyapunov value grows beyond the slack, and
/// the largest such growth.
pub fn lyapunov_increases(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut count = 0;
    let mut worst = 0.0f64;
    let mut prev: Option<f64> = None;
    for l in values {
        if let Some(p) = prev {
            let inc = l - p;
            if inc > LYAPUNOV_SLACK * p.max(1.0) {
                count += 1;
                worst = worst.max(inc);
            }
        }
        prev = Some(l);
    }
    (count, worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attitude::{UnitQuat, E_Z};
    use std::f64::consts::PI;

    fn free(p: RigidBodyParams) -> impl Fn(f64, &VehicleState) -> StateDerivative {
        move |_, x| state_derivative(x, &Command::zero(), &Vec3::zeros(), &p)
    }

    #[test]
    fn zero_field_leaves_state_unchanged() {
        let s = Scenario::reference().initial;
        let next = rk4_step(&s, 0.0, 0.01, |_, _| StateDerivative::zero()).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn free_fall_is_exact() {
        let p = RigidBodyParams::unit();
        let mut s = VehicleState::at_rest(Vec3::zeros());
        for k in 0..1000 {
            s = rk4_step(&s, k as f64 * 1e-3, 1e-3, free(p)).unwrap();
        }
        assert!((s.velocity - 9.81 * E_Z).norm() < 1e-9);
        assert!((s.position.z - 0.5 * 9.81).abs() < 1e-9);
    }

    #[test]
    fn full_turn_about_z() {
        // A 2π turn restores the rotation and negates the quaternion; a 4π
        // turn restores the quaternion.
        let p = RigidBodyParams::unit();
        let mut s = VehicleState::at_rest(Vec3::zeros());
        s.attitude = UnitQuat::from_array([0.1, -0.2, 0.3, 0.9]).unwrap();
        s.omega = Vec3::new(0.0, 0.0, 1.0);
        let q0 = s.attitude;
        let n = 20_000;
        let h = 2.0 * PI / n as f64;
        let mut x = s;
        for k in 0..n {
            x = rk4_step(&x, k as f64 * h, h, free(p)).unwrap();
        }
        assert!((x.attitude.rotation() - q0.rotation()).abs().max() < 1e-6);
        assert!((x.attitude.to_vec4() + q0.to_vec4()).norm() < 1e-6);
        for k in 0..n {
            x = rk4_step(&x, k as f64 * h, h, free(p)).unwrap();
        }
        assert!((x.attitude.to_vec4() - q0.to_vec4()).norm() < 1e-6);
    }

    #[test]
    fn torque_free_momentum_is_conserved() {
        let j = Mat3::from_diagonal(&Vec3::new(0.8, 1.0, 1.7));
        let p = RigidBodyParams::new(1.0, j, 9.81).unwrap();
        let mut x = VehicleState::at_rest(Vec3::zeros());
        x.omega = Vec3::new(0.4, 1.1, -0.3);
        let momentum = |x: &VehicleState| x.attitude.rotation().transpose() * (j * x.omega);
        let h0 = momentum(&x);
        for k in 0..10_000 {
            x = rk4_step(&x, k as f64 * 1e-3, 1e-3, free(p)).unwrap();
        }
        assert!((momentum(&x) - h0).norm() < 1e-6);
        assert!((momentum(&x).norm() - h0.norm()).abs() < 1e-6);
    }

    #[test]
    fn lyapunov_examples() {
        let j = Mat3::identity();
        assert_eq!(lyapunov_value(1.0, &Vec3::zeros(), &Vec3::zeros(), &j, 15.0), 0.0);
        assert_eq!(lyapunov_value(-1.0, &Vec3::zeros(), &Vec3::zeros(), &j, 15.0), 30.0);
        assert_eq!(lyapunov_value(1.0, &Vec3::repeat(1.0), &Vec3::zeros(), &j, 15.0), 1.5);
    }

    #[test]
    fn settling_bound_example() {
        assert!((settling_time_bound(1.0, 5.0, 0.5) - 0.4).abs() < 1e-15);
        assert_eq!(reduced_solution(1.0, 5.0, 0.5, 0.4), 0.0);
        assert!((reduced_solution(-1.0, 5.0, 0.5, 0.2) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_increase_counting() {
        let (n, worst) = lyapunov_increases([5.0, 4.0, 4.0 + 1e-10, 4.0, 4.5, 1.0]);
        assert_eq!(n, 1);
        assert_eq!(worst, 0.5);
    }

    fn hover_scenario() -> Scenario {
        let mut sc = Scenario::reference();
        sc.trajectory = TrajectorySpec::Hover {
            position: [1.0, -1.0, 2.0],
        };
        sc.initial = VehicleState::at_rest(Vec3::new(1.0, -1.0, 2.0));
        sc.disturbance = DisturbanceModel::None;
        sc.t_end = 2.0;
        sc
    }

    #[test]
    fn hover_at_equilibrium_stays_put() {
        let sc = hover_scenario();
        let trace = run(&sc).unwrap();
        assert_eq!(trace.len(), 2001);
        for r in &trace.records {
            assert!(r.control.diag.errors.position.norm() < 1e-9);
        }
        let m = compute_metrics(&trace, &sc);
        assert_eq!(m.settling_time, [Some(0.0); 3]);
        assert_eq!(m.reaching_time, Some(0.0));
        assert_eq!(m.lyapunov_violations, Some(0));
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut sc = hover_scenario();
        sc.dt = 0.0;
        assert!(matches!(run(&sc), Err(SimError::Scenario(ScenarioError::BadStep(_)))));

        let mut sc = hover_scenario();
        sc.gains.beta = 0.0;
        assert!(matches!(
            run(&sc),
            Err(SimError::Scenario(ScenarioError::Gains(GainError::RobustGainTooSmall { .. })))
        ));
        sc.enforce_robust_bound = false;
        assert!(run(&sc).is_ok());

        let mut sc = hover_scenario();
        sc.trajectory = TrajectorySpec::Polynomial {
            x: vec![0.0],
            y: vec![0.0],
            z: vec![0.0, 0.0, 0.5 * 9.81],
        };
        assert!(matches!(run(&sc), Err(SimError::Infeasible(_))));
    }

    #[test]
    fn singularity_reports_time() {
        // Demanding a large downward acceleration with weak robust margins
        // drives F across g e_z and must abort with a timestamp.
        let mut sc = hover_scenario();
        sc.initial.position = Vec3::new(1.0, -1.0, -20.0);
        sc.gains.k_t = Vec3::repeat(12.0);
        let (trace, err) = run_partial(&sc);
        match err {
            Some(SimError::Control { time, .. }) => assert_eq!(time, 0.0),
            other => panic!("expected control failure, got {other:?}"),
        }
        assert!(trace.is_empty());
    }
}
