//! Unified finite-time sliding-mode tracking controller.
//!
//! One call to [`control_step`] evaluates, in dependency order:
//!
//! 1. translational errors and the per-axis sliding variable `s_t`,
//! 2. the virtual force `F = A_d − (k_t + β) ⊙ tanh(s_t)`,
//! 3. thrust `T = m ‖g e_z − F‖` and the zero-yaw desired attitude `Q_d`,
//! 4. the nominal error acceleration and `ṡ_t`, then `Ḟ` and `Ω_d = Φ(F) Ḟ`,
//! 5. attitude errors `Q̃`, `Ω̃ = Ω − R(Q̃) Ω_d` and their rates,
//! 6. the nominal error jerk, `s̈_t`, `F̈` and `Ω̇_d`,
//! 7. the coupling variable `Ψ`, `Θ = Ω̃ − Ψ`, `Ψ̇`, and finally the torque.
//!
//! The wind force is unknown to the controller: every derivative here is the
//! disturbance-free model, and the robust gain `β` has to dominate the gap.
//! The controller keeps no state between calls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{qbar, qbar_rate, quat_error, sgn, skew, Mat3, UnitQuat, Vec3, Vec4, E_Z};
use crate::dynamics::{Command, RigidBodyParams, VehicleState};
use crate::trajectory::RefPoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GainError {
    #[error("gain `{name}` must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("sliding exponent beta_t must lie in (0, 1), got {0}")]
    ExponentOutOfRange(f64),
    #[error("robust gain {beta} is below the required bound {required} (disturbance estimate {delta_hat} + margin {beta0})")]
    RobustGainTooSmall {
        beta: f64,
        required: f64,
        delta_hat: f64,
        beta0: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ControlError {
    /// `F` coincides with `g e_z`: no thrust direction exists.
    #[error("degenerate thrust: |g e_z - F| = {residual:e}")]
    DegenerateThrust { residual: f64 },
    /// Desired thrust axis too close to inverted.
    #[error("attitude extraction singular: {quantity} = {value:e}")]
    AttitudeSingularity { quantity: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Smallest admissible `‖g e_z − F‖` (m/s² per unit mass).
    pub thrust: f64,
    /// Smallest admissible desired scalar part `q_d0`.
    pub q0: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            thrust: 1e-6,
            q0: 1e-4,
        }
    }
}

/// Controller gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    /// Sliding-surface gain `k_st`.
    pub k_s: f64,
    /// Fractional exponent `β_t ∈ (0, 1)`.
    pub beta_t: f64,
    /// Per-axis virtual-force gains.
    pub k_t: Vec3,
    /// Robust gain `β` on the saturated sliding variable.
    pub beta: f64,
    /// Margin `β₀` required above the disturbance estimate.
    pub beta0: f64,
    pub k_eta: f64,
    pub k_theta: f64,
    pub k_q: f64,
    /// Boundary-layer half-width `ε` (m) inside which the exponent is one.
    pub boundary_layer: f64,
    /// Negate `Q̃` whenever its scalar part is negative.
    pub unwinding_flip: bool,
}

impl Gains {
    /// Reference tuning with the robust gain set to `delta_hat + β₀`.
    pub fn reference(delta_hat: f64) -> Self {
        let beta0 = 0.1;
        Self {
            k_s: 5.0,
            beta_t: 0.99,
            k_t: Vec3::repeat(2.0),
            beta: delta_hat + beta0,
            beta0,
            k_eta: 15.0,
            k_theta: 15.0,
            k_q: 15.0,
            boundary_layer: 1e-3,
            unwinding_flip: false,
        }
    }

    /// Positivity and range checks. `β = 0` passes (robust term removed).
    pub fn validate(&self) -> Result<(), GainError> {
        let positive = [
            ("k_s", self.k_s),
            ("k_t.x", self.k_t.x),
            ("k_t.y", self.k_t.y),
            ("k_t.z", self.k_t.z),
            ("beta0", self.beta0),
            ("k_eta", self.k_eta),
            ("k_theta", self.k_theta),
            ("k_q", self.k_q),
            ("boundary_layer", self.boundary_layer),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(GainError::NotPositive { name, value });
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(GainError::NotPositive {
                name: "beta",
                value: self.beta,
            });
        }
        if !(self.beta_t > 0.0 && self.beta_t < 1.0) {
            return Err(GainError::ExponentOutOfRange(self.beta_t));
        }
        Ok(())
    }

    /// `β ≥ Δ̂ + β₀`.
    pub fn check_robust(&self, delta_hat: f64) -> Result<(), GainError> {
        let required = delta_hat + self.beta0;
        if self.beta >= required {
            Ok(())
        } else {
            Err(GainError::RobustGainTooSmall {
                beta: self.beta,
                required,
                delta_hat,
                beta0: self.beta0,
            })
        }
    }

    fn force_gain(&self) -> Vec3 {
        self.k_t.add_scalar(self.beta)
    }
}

/// Disturbance-bound estimate `Δ̂ = ‖δ_f‖/m + k_st · v_margin`, where
/// `v_margin` bounds the velocity error the robust term is sized for.
pub fn disturbance_estimate(bound: &Vec3, mass: f64, k_s: f64, velocity_margin: f64) -> f64 {
    bound.norm() / mass + k_s * velocity_margin
}

/// Tracking errors at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSignals {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: UnitQuat,
    pub omega: Vec3,
    pub qbar: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SlidingState {
    pub s: Vec3,
    pub s_dot: Vec3,
    pub s_ddot: Vec3,
}

/// Intermediate quantities of one control evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub errors: ErrorSignals,
    pub sliding: SlidingState,
    pub exponent: Vec3,
    pub force: Vec3,
    pub force_dot: Vec3,
    pub force_ddot: Vec3,
    pub thrust_dot: f64,
    pub desired_attitude: UnitQuat,
    pub desired_omega: Vec3,
    pub desired_omega_dot: Vec3,
    /// `d/dt [q̃, q̃0]`.
    pub attitude_error_rate: Vec4,
    /// Disturbance-free `dṼ/dt`.
    pub accel_error: Vec3,
    /// Disturbance-free `d²Ṽ/dt²`.
    pub jerk_error: Vec3,
    pub theta: Vec3,
    pub psi: Vec3,
    pub psi_dot: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub command: Command,
    pub diag: Diagnostics,
}

/// 1 inside the boundary layer `|p̃| < ε`, `β_t` otherwise.
#[inline]
pub fn effective_exponent(p_err: f64, gains: &Gains) -> f64 {
    if p_err.abs() < gains.boundary_layer {
        1.0
    } else {
        gains.beta_t
    }
}

fn exponents(p_err: &Vec3, gains: &Gains) -> Vec3 {
    p_err.map(|p| effective_exponent(p, gains))
}

/// `s_i = k_st |p̃_i|^b_i sgn(p̃_i) + ṽ_i` with the per-axis effective exponent.
pub fn sliding_vars(p_err: &Vec3, v_err: &Vec3, gains: &Gains) -> Vec3 {
    Vec3::from_fn(|i, _| {
        let p = p_err[i];
        let b = effective_exponent(p, gains);
        gains.k_s * p.abs().powf(b) * sgn(p) + v_err[i]
    })
}

/// Elementwise `tanh`.
pub fn saturation(s: &Vec3) -> Vec3 {
    s.map(f64::tanh)
}

/// `F = A_d − k_t ⊙ S(s_t) − β S(s_t)`.
pub fn virtual_force(s: &Vec3, accel_ref: &Vec3, gains: &Gains) -> Vec3 {
    accel_ref - gains.force_gain().component_mul(&saturation(s))
}

/// `T = m ‖g e_z − F‖`.
pub fn thrust_of(force: &Vec3, p: &RigidBodyParams, tol: &Tolerances) -> Result<f64, ControlError> {
    let residual = (p.gravity() * E_Z - force).norm();
    if !(residual > tol.thrust) {
        return Err(ControlError::DegenerateThrust { residual });
    }
    Ok(p.mass() * residual)
}

/// Zero-yaw attitude whose thrust axis realizes `F` at thrust `T`.
pub fn desired_attitude(
    force: &Vec3,
    thrust: f64,
    p: &RigidBodyParams,
    tol: &Tolerances,
) -> Result<UnitQuat, ControlError> {
    let m = p.mass();
    let ratio = m / (2.0 * thrust);
    let q0_sq = ratio * (p.gravity() - force.z) + 0.5;
    if !(thrust > 0.0) || !(q0_sq > tol.q0 * tol.q0) {
        return Err(ControlError::AttitudeSingularity {
            quantity: "q_d0",
            value: q0_sq.max(0.0).sqrt(),
        });
    }
    let q0 = q0_sq.sqrt();
    let k = ratio / q0;
    UnitQuat::try_new(Vec3::new(k * force.y, -k * force.x, 0.0), q0).ok_or(
        ControlError::AttitudeSingularity {
            quantity: "q_d",
            value: f64::NAN,
        },
    )
}

/// Φ(F) with `Ω_d = Φ(F) Ḟ`, where `α₁ = ‖g e_z − F‖`, `α₂ = α₁ + g − f_z`.
pub fn phi_matrix(force: &Vec3, p: &RigidBodyParams, tol: &Tolerances) -> Result<Mat3, ControlError> {
    let g = p.gravity();
    let (fx, fy, fz) = (force.x, force.y, force.z);
    let a1 = (g * E_Z - force).norm();
    if !(a1 > tol.thrust) {
        return Err(ControlError::DegenerateThrust { residual: a1 });
    }
    let a2 = a1 + g - fz;
    // α₂ = 2 α₁ q_d0², so this is the same guard as in `desired_attitude`.
    if !(a2 > 2.0 * a1 * tol.q0 * tol.q0) {
        return Err(ControlError::AttitudeSingularity {
            quantity: "alpha2",
            value: a2,
        });
    }
    let a12 = a1 * a2;
    #[rustfmt::skip]
    let m = Mat3::new(
        -fx * fy,           -fy * fy + a12, fy * a2,
        fx * fx - a12,      fx * fy,        -fx * a2,
        fy * a1,            -fx * a1,       0.0,
    );
    Ok(m / (a1 * a1 * a2))
}

/// `(Ω_d, Ω̇_d)` from `F` and its first two derivatives.
///
/// `Ω̇_d = (DΦ[Ḟ]) Ḟ + Φ F̈`; the directional derivative of `Φ` along `Ḟ` is
/// a central difference with a step of `1e-6` relative to `‖F‖`.
pub fn desired_rates(
    force: &Vec3,
    force_dot: &Vec3,
    force_ddot: &Vec3,
    p: &RigidBodyParams,
    tol: &Tolerances,
) -> Result<(Vec3, Vec3), ControlError> {
    let phi = phi_matrix(force, p, tol)?;
    let omega_d = phi * force_dot;
    let n_dot = force_dot.norm();
    let phi_dot_term = if n_dot > 0.0 {
        let h = 1e-6 * force.norm().max(1.0) / n_dot;
        let plus = phi_matrix(&(force + h * force_dot), p, tol)?;
        let minus = phi_matrix(&(force - h * force_dot), p, tol)?;
        (plus - minus) * force_dot / (2.0 * h)
    } else {
        Vec3::zeros()
    };
    Ok((omega_d, phi_dot_term + phi * force_ddot))
}

/// Disturbance-free `dṼ/dt = −(2T/m) Rᵀ [q̄]× q̃ + F − A_d`.
pub fn nominal_accel_error(
    errors: &ErrorSignals,
    rotation: &Mat3,
    thrust: f64,
    force: &Vec3,
    accel_ref: &Vec3,
    mass: f64,
) -> Vec3 {
    -(2.0 * thrust / mass) * rotation.transpose() * skew(&errors.qbar) * errors.attitude.vector()
        + force
        - accel_ref
}

/// `ṡ_i = k_st b_i |p̃_i|^(b_i−1) ṽ_i + dṼ_i/dt`.
pub fn sliding_rate(p_err: &Vec3, v_err: &Vec3, accel_err: &Vec3, gains: &Gains) -> Vec3 {
    Vec3::from_fn(|i, _| {
        let b = effective_exponent(p_err[i], gains);
        let slope = if b == 1.0 {
            1.0
        } else {
            b * p_err[i].abs().powf(b - 1.0)
        };
        gains.k_s * slope * v_err[i] + accel_err[i]
    })
}

/// `s̈_i = k_st b_i [(b_i−1)|p̃_i|^(b_i−2) sgn(p̃_i) ṽ_i² + |p̃_i|^(b_i−1) dṼ_i/dt] + d²Ṽ_i/dt²`.
pub fn sliding_accel(
    p_err: &Vec3,
    v_err: &Vec3,
    accel_err: &Vec3,
    jerk_err: &Vec3,
    gains: &Gains,
) -> Vec3 {
    Vec3::from_fn(|i, _| {
        let p = p_err[i];
        let b = effective_exponent(p, gains);
        let lin = if b == 1.0 {
            accel_err[i]
        } else {
            let a = p.abs();
            b * ((b - 1.0) * a.powf(b - 2.0) * sgn(p) * v_err[i] * v_err[i]
                + a.powf(b - 1.0) * accel_err[i])
        };
        gains.k_s * lin + jerk_err[i]
    })
}

/// Assembles `(s_t, ṡ_t, s̈_t)` from errors and the nominal error derivatives.
pub fn sliding_derivatives(
    p_err: &Vec3,
    v_err: &Vec3,
    accel_err: &Vec3,
    jerk_err: &Vec3,
    gains: &Gains,
) -> SlidingState {
    SlidingState {
        s: sliding_vars(p_err, v_err, gains),
        s_dot: sliding_rate(p_err, v_err, accel_err, gains),
        s_ddot: sliding_accel(p_err, v_err, accel_err, jerk_err, gains),
    }
}

fn tanh_slope(s: &Vec3) -> Vec3 {
    s.map(|x| {
        let t = x.tanh();
        1.0 - t * t
    })
}

/// `Ḟ = J_d − (k_t + β) ⊙ D(s) ṡ`.
pub fn force_rate(gains: &Gains, s: &Vec3, s_dot: &Vec3, jerk_ref: &Vec3) -> Vec3 {
    jerk_ref - gains.force_gain().component_mul(&tanh_slope(s).component_mul(s_dot))
}

/// `F̈ = S_d − (k_t + β) ⊙ (Ḋ(s) ṡ + D(s) s̈)` with `Ḋ_i = −2 tanh(s_i) D_i ṡ_i`.
pub fn force_accel(gains: &Gains, sl: &SlidingState, snap_ref: &Vec3) -> Vec3 {
    let d = tanh_slope(&sl.s);
    let d_dot = Vec3::from_fn(|i, _| -2.0 * sl.s[i].tanh() * d[i] * sl.s_dot[i]);
    snap_ref
        - gains
            .force_gain()
            .component_mul(&(d_dot.component_mul(&sl.s_dot) + d.component_mul(&sl.s_ddot)))
}

pub fn force_derivatives(
    gains: &Gains,
    sl: &SlidingState,
    jerk_ref: &Vec3,
    snap_ref: &Vec3,
) -> (Vec3, Vec3) {
    (
        force_rate(gains, &sl.s, &sl.s_dot, jerk_ref),
        force_accel(gains, sl, snap_ref),
    )
}

/// `Ψ = −k_η q̃ + (2T/m) [q̄]×ᵀ R(Q) s_t`.
pub fn aux_psi(
    errors: &ErrorSignals,
    rotation: &Mat3,
    s: &Vec3,
    thrust: f64,
    mass: f64,
    gains: &Gains,
) -> Vec3 {
    -gains.k_eta * errors.attitude.vector()
        + (2.0 * thrust / mass) * skew(&errors.qbar).transpose() * rotation * s
}

/// Everything `Ψ̇` depends on.
#[derive(Debug, Clone, Copy)]
pub struct PsiRateInputs<'a> {
    pub errors: &'a ErrorSignals,
    pub attitude_error_rate: &'a Vec4,
    pub rotation: &'a Mat3,
    /// Body rate `Ω` of the vehicle, giving `Ṙ = −[Ω]× R`.
    pub omega: &'a Vec3,
    pub sliding: &'a SlidingState,
    pub thrust: f64,
    pub thrust_dot: f64,
    pub mass: f64,
}

/// Chain-rule derivative of [`aux_psi`]:
/// `Ψ̇ = −k_η q̃̇ + (2/m)[Ṫ [q̄]×ᵀ R s + T ([q̄̇]×ᵀ R s + [q̄]×ᵀ Ṙ s + [q̄]×ᵀ R ṡ)]`.
pub fn psi_dot(x: &PsiRateInputs<'_>, gains: &Gains) -> Vec3 {
    let qerr_dot = x.attitude_error_rate.xyz();
    let qbar_dot = qbar_rate(x.attitude_error_rate);
    let qb_t = skew(&x.errors.qbar).transpose();
    let r_dot = -skew(x.omega) * x.rotation;
    let s = &x.sliding.s;
    let coupling = x.thrust_dot * qb_t * x.rotation * s
        + x.thrust
            * (skew(&qbar_dot).transpose() * x.rotation * s
                + qb_t * r_dot * s
                + qb_t * x.rotation * x.sliding.s_dot);
    -gains.k_eta * qerr_dot + (2.0 / x.mass) * coupling
}

/// `Θ = Ω̃ − Ψ`.
pub fn theta(omega_err: &Vec3, psi: &Vec3) -> Vec3 {
    omega_err - psi
}

/// `Γ = [Ω]× J Ω − J [Ω̃]× R(Q̃) Ω_d + J R(Q̃) Ω̇_d − k_θ Θ − k_q q̃ + J Ψ̇`.
#[allow(clippy::too_many_arguments)]
pub fn torque(
    omega: &Vec3,
    errors: &ErrorSignals,
    theta: &Vec3,
    psi_dot: &Vec3,
    omega_d: &Vec3,
    omega_d_dot: &Vec3,
    p: &RigidBodyParams,
    gains: &Gains,
) -> Vec3 {
    let j = p.inertia();
    let r_err = errors.attitude.rotation();
    skew(omega) * j * omega - j * skew(&errors.omega) * r_err * omega_d + j * r_err * omega_d_dot
        - gains.k_theta * theta
        - gains.k_q * errors.attitude.vector()
        + j * psi_dot
}

/// Disturbance-free `d²Ṽ/dt²`, the exact time derivative of
/// [`nominal_accel_error`] at fixed `A_d` rate `J_d`.
#[allow(clippy::too_many_arguments)]
pub fn nominal_jerk_error(
    errors: &ErrorSignals,
    attitude_error_rate: &Vec4,
    rotation: &Mat3,
    omega: &Vec3,
    thrust: f64,
    thrust_dot: f64,
    force_dot: &Vec3,
    jerk_ref: &Vec3,
    mass: f64,
) -> Vec3 {
    let qerr = errors.attitude.vector();
    let qerr_dot = attitude_error_rate.xyz();
    let qb = skew(&errors.qbar);
    let qb_dot = skew(&qbar_rate(attitude_error_rate));
    let rt = rotation.transpose();
    // Ṙ = −[Ω]× R, so d/dt Rᵀ = Rᵀ [Ω]×
    let rt_dot = rt * skew(omega);
    -(2.0 * thrust_dot / mass) * rt * qb * qerr
        - (2.0 * thrust / mass) * (rt_dot * qb * qerr + rt * qb_dot * qerr + rt * qb * qerr_dot)
        + force_dot
        - jerk_ref
}

/// Full control evaluation with default tolerances.
pub fn control_step(
    state: &VehicleState,
    reference: &RefPoint,
    gains: &Gains,
    p: &RigidBodyParams,
) -> Result<ControlOutput, ControlError> {
    control_step_with(state, reference, gains, p, &Tolerances::default())
}

pub fn control_step_with(
    state: &VehicleState,
    reference: &RefPoint,
    gains: &Gains,
    p: &RigidBodyParams,
    tol: &Tolerances,
) -> Result<ControlOutput, ControlError> {
    let m = p.mass();
    let g = p.gravity();

    let p_err = state.position - reference.position;
    let v_err = state.velocity - reference.velocity;
    let exponent = exponents(&p_err, gains);
    let s = sliding_vars(&p_err, &v_err, gains);

    let force = virtual_force(&s, &reference.acceleration, gains);
    let thrust = thrust_of(&force, p, tol)?;
    let q_d = desired_attitude(&force, thrust, p, tol)?;

    let mut q_err = quat_error(&q_d, &state.attitude);
    if gains.unwinding_flip && q_err.scalar() < 0.0 {
        q_err = q_err.negated();
    }
    let rotation = state.attitude.rotation();
    let mut errors = ErrorSignals {
        position: p_err,
        velocity: v_err,
        attitude: q_err,
        omega: Vec3::zeros(),
        qbar: qbar(&q_err),
    };

    let accel_err = nominal_accel_error(&errors, &rotation, thrust, &force, &reference.acceleration, m);
    let s_dot = sliding_rate(&p_err, &v_err, &accel_err, gains);
    let force_dot = force_rate(gains, &s, &s_dot, &reference.jerk);
    let thrust_dot = -m * (g * E_Z - force).dot(&force_dot) / (thrust / m);

    let phi = phi_matrix(&force, p, tol)?;
    let omega_d = phi * force_dot;
    let r_err = q_err.rotation();
    errors.omega = state.omega - r_err * omega_d;
    let attitude_error_rate = q_err.rate(&errors.omega);

    let jerk_err = nominal_jerk_error(
        &errors,
        &attitude_error_rate,
        &rotation,
        &state.omega,
        thrust,
        thrust_dot,
        &force_dot,
        &reference.jerk,
        m,
    );
    let s_ddot = sliding_accel(&p_err, &v_err, &accel_err, &jerk_err, gains);
    let sliding = SlidingState { s, s_dot, s_ddot };
    let force_ddot = force_accel(gains, &sliding, &reference.snap);
    let (_, omega_d_dot) = desired_rates(&force, &force_dot, &force_ddot, p, tol)?;

    let psi = aux_psi(&errors, &rotation, &s, thrust, m, gains);
    let theta = theta(&errors.omega, &psi);
    let psi_dot = psi_dot(
        &PsiRateInputs {
            errors: &errors,
            attitude_error_rate: &attitude_error_rate,
            rotation: &rotation,
            omega: &state.omega,
            sliding: &sliding,
            thrust,
            thrust_dot,
            mass: m,
        },
        gains,
    );
    let torque = torque(
        &state.omega,
        &errors,
        &theta,
        &psi_dot,
        &omega_d,
        &omega_d_dot,
        p,
        gains,
    );

    Ok(ControlOutput {
        command: Command { thrust, torque },
        diag: Diagnostics {
            errors,
            sliding,
            exponent,
            force,
            force_dot,
            force_ddot,
            thrust_dot,
            desired_attitude: q_d,
            desired_omega: omega_d,
            desired_omega_dot: omega_d_dot,
            attitude_error_rate,
            accel_error: accel_err,
            jerk_error: jerk_err,
            theta,
            psi,
            psi_dot,
        },
    })
}
