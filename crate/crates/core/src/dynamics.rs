//! Rigid-body quadrotor plant and exogenous wind force.
//!
//! Inertial axes have `e_z` pointing along gravity: the plant is
//! `V̇ = −(T/m) R(Q)ᵀ e_z + g e_z + F_d/m`, so a hovering vehicle holds
//! `T = m g` with `Q = Q_I`, and a larger `z` means further "down".

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{skew, Mat3, UnitQuat, Vec3, Vec4, E_Z};

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("mass must be positive and finite, got {0}")]
    NonPositiveMass(f64),
    #[error("inertia matrix must be symmetric (max asymmetry {0:e})")]
    AsymmetricInertia(f64),
    #[error("inertia matrix must be positive definite (smallest eigenvalue {0:e})")]
    IndefiniteInertia(f64),
    #[error("gravity must be positive and finite, got {0}")]
    InvalidGravity(f64),
    #[error("disturbance amplitude {amplitude:?} exceeds declared bound {bound:?} on some axis")]
    DisturbanceExceedsBound { amplitude: [f64; 3], bound: [f64; 3] },
    #[error("disturbance table must be non-empty with strictly increasing finite times")]
    BadDisturbanceTable,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Mass, inertia and gravity. Validated on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyParams {
    mass: f64,
    inertia: Mat3,
    inertia_inv: Mat3,
    gravity: f64,
}

impl RigidBodyParams {
    pub fn new(mass: f64, inertia: Mat3, gravity: f64) -> Result<Self, ParamError> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(ParamError::NonPositiveMass(mass));
        }
        if !(gravity.is_finite() && gravity > 0.0) {
            return Err(ParamError::InvalidGravity(gravity));
        }
        if inertia.iter().any(|x| !x.is_finite()) {
            return Err(ParamError::NonFinite("inertia"));
        }
        let asym = (inertia - inertia.transpose()).abs().max();
        if asym > 1e-12 * inertia.abs().max().max(1.0) {
            return Err(ParamError::AsymmetricInertia(asym));
        }
        let min_eig = inertia.symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(ParamError::IndefiniteInertia(min_eig));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or(ParamError::IndefiniteInertia(min_eig))?;
        Ok(Self {
            mass,
            inertia,
            inertia_inv,
            gravity,
        })
    }

    /// 1 kg, unit inertia, standard gravity.
    pub fn unit() -> Self {
        Self::new(1.0, Mat3::identity(), STANDARD_GRAVITY).unwrap()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Mat3 {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Mat3 {
        &self.inertia_inv
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }
}

/// Position and velocity in the inertial frame, attitude, body rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: UnitQuat,
    pub omega: Vec3,
}

impl VehicleState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            attitude: UnitQuat::IDENTITY,
            omega: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.attitude.to_array().iter().all(|x| x.is_finite())
            && self.omega.iter().all(|x| x.is_finite())
    }

    /// `self + h·d` with the quaternion renormalized. Returns `None` if the
    /// quaternion collapses or anything turns non-finite.
    pub fn advanced(&self, d: &StateDerivative, h: f64) -> Option<Self> {
        let attitude = UnitQuat::from_vec4(&(self.attitude.to_vec4() + h * d.attitude))?;
        let next = Self {
            position: self.position + h * d.position,
            velocity: self.velocity + h * d.velocity,
            attitude,
            omega: self.omega + h * d.omega,
        };
        next.is_finite().then_some(next)
    }
}

/// Collective thrust (N) and body torque (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub thrust: f64,
    pub torque: Vec3,
}

impl Command {
    pub fn zero() -> Self {
        Self {
            thrust: 0.0,
            torque: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Vec4,
    pub omega: Vec3,
}

impl StateDerivative {
    pub fn zero() -> Self {
        Self {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            attitude: Vec4::zeros(),
            omega: Vec3::zeros(),
        }
    }
}

/// Plant vector field.
pub fn state_derivative(
    s: &VehicleState,
    u: &Command,
    f_dist: &Vec3,
    p: &RigidBodyParams,
) -> StateDerivative {
    let thrust_axis = s.attitude.rotation().transpose() * E_Z;
    let velocity = -(u.thrust / p.mass) * thrust_axis + p.gravity * E_Z + f_dist / p.mass;
    let j_omega = p.inertia * s.omega;
    let omega = p.inertia_inv * (-skew(&s.omega) * j_omega + u.torque);
    StateDerivative {
        position: s.velocity,
        velocity,
        attitude: s.attitude.rate(&s.omega),
        omega,
    }
}

/// Wind force model, in newtons.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisturbanceModel {
    #[default]
    None,
    /// `amplitude ⊙ cos(frequency·t + phase)` per axis.
    Sinusoid {
        amplitude: [f64; 3],
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Constant { force: [f64; 3] },
    /// Piecewise-linear in time, held constant outside the table.
    Table {
        times: Vec<f64>,
        forces: Vec<[f64; 3]>,
    },
}


impl DisturbanceModel {
    /// `0.01 cos(0.1 t)` N on every axis.
    pub fn reference_wind() -> Self {
        Self::Sinusoid {
            amplitude: [0.01; 3],
            frequency: 0.1,
            phase: 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        match self {
            Self::None => true,
            Self::Constant { force } => force.iter().all(|&f| f == 0.0),
            Self::Sinusoid { amplitude, .. } => amplitude.iter().all(|&a| a == 0.0),
            Self::Table { forces, .. } => forces.iter().flatten().all(|&f| f == 0.0),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            Self::None => Ok(()),
            Self::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                if amplitude.iter().chain([frequency, phase]).all(|x| x.is_finite()) {
                    Ok(())
                } else {
                    Err(ParamError::NonFinite("disturbance"))
                }
            }
            Self::Constant { force } => {
                if force.iter().all(|x| x.is_finite()) {
                    Ok(())
                } else {
                    Err(ParamError::NonFinite("disturbance"))
                }
            }
            Self::Table { times, forces } => {
                let ok = !times.is_empty()
                    && times.len() == forces.len()
                    && times.iter().all(|t| t.is_finite())
                    && times.windows(2).all(|w| w[1] > w[0])
                    && forces.iter().flatten().all(|f| f.is_finite());
                if ok {
                    Ok(())
                } else {
                    Err(ParamError::BadDisturbanceTable)
                }
            }
        }
    }

    /// Per-axis peak magnitude `|F_d,i|` over all time.
    pub fn peak(&self) -> Vec3 {
        match self {
            Self::None => Vec3::zeros(),
            Self::Sinusoid { amplitude, .. } => Vec3::from(*amplitude).abs(),
            Self::Constant { force } => Vec3::from(*force).abs(),
            Self::Table { forces, .. } => forces.iter().fold(Vec3::zeros(), |acc, f| {
                acc.zip_map(&Vec3::from(*f), |a, b| a.max(b.abs()))
            }),
        }
    }

    /// Checks the model never exceeds a declared per-axis bound.
    pub fn check_bound(&self, bound: &Vec3) -> Result<(), ParamError> {
        let peak = self.peak();
        if peak.iter().zip(bound.iter()).all(|(p, b)| p <= b) {
            Ok(())
        } else {
            Err(ParamError::DisturbanceExceedsBound {
                amplitude: peak.into(),
                bound: (*bound).into(),
            })
        }
    }

    pub fn force(&self, t: f64) -> Vec3 {
        match self {
            Self::None => Vec3::zeros(),
            Self::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => Vec3::from(*amplitude) * (frequency * t + phase).cos(),
            Self::Constant { force } => Vec3::from(*force),
            Self::Table { times, forces } => {
                let i = times.partition_point(|&ti| ti <= t);
                if i == 0 {
                    Vec3::from(forces[0])
                } else if i == times.len() {
                    Vec3::from(forces[times.len() - 1])
                } else {
                    let (t0, t1) = (times[i - 1], times[i]);
                    let a = (t - t0) / (t1 - t0);
                    Vec3::from(forces[i - 1]) * (1.0 - a) + Vec3::from(forces[i]) * a
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(
            RigidBodyParams::new(0.0, Mat3::identity(), 9.81),
            Err(ParamError::NonPositiveMass(_))
        ));
        let mut j = Mat3::identity();
        j[(0, 1)] = 0.5;
        assert!(matches!(
            RigidBodyParams::new(1.0, j, 9.81),
            Err(ParamError::AsymmetricInertia(_))
        ));
        let j = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
        assert!(matches!(
            RigidBodyParams::new(1.0, j, 9.81),
            Err(ParamError::IndefiniteInertia(_))
        ));
    }

    #[test]
    fn reference_wind_values() {
        let d = DisturbanceModel::reference_wind();
        assert_eq!(d.force(0.0), Vec3::new(0.01, 0.01, 0.01));
        let half = d.force(10.0 * std::f64::consts::PI);
        assert!((half - Vec3::repeat(-0.01)).norm() < 1e-15);
        assert_eq!(DisturbanceModel::None.force(3.0), Vec3::zeros());
    }

    #[test]
    fn table_interpolates_and_holds() {
        let d = DisturbanceModel::Table {
            times: vec![1.0, 3.0],
            forces: vec![[0.0, 0.0, 0.0], [2.0, -2.0, 4.0]],
        };
        d.validate().unwrap();
        assert_eq!(d.force(0.0), Vec3::zeros());
        assert_eq!(d.force(2.0), Vec3::new(1.0, -1.0, 2.0));
        assert_eq!(d.force(10.0), Vec3::new(2.0, -2.0, 4.0));
        assert_eq!(d.peak(), Vec3::new(2.0, 2.0, 4.0));
        assert!(d.check_bound(&Vec3::repeat(3.0)).is_err());
        assert!(d.check_bound(&Vec3::new(2.0, 2.0, 4.0)).is_ok());
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = RigidBodyParams::unit();
        let s = VehicleState::at_rest(Vec3::new(1.0, 2.0, 3.0));
        let u = Command {
            thrust: p.mass() * p.gravity(),
            torque: Vec3::zeros(),
        };
        let d = state_derivative(&s, &u, &Vec3::zeros(), &p);
        assert_eq!(d.velocity, Vec3::zeros());
        assert_eq!(d.omega, Vec3::zeros());
    }

    #[test]
    fn free_fall_accelerates_along_gravity() {
        let p = RigidBodyParams::unit();
        let s = VehicleState::at_rest(Vec3::zeros());
        let d = state_derivative(&s, &Command::zero(), &Vec3::zeros(), &p);
        assert_eq!(d.velocity, Vec3::new(0.0, 0.0, 9.81));
    }

    #[test]
    fn isotropic_body_has_no_gyroscopic_torque() {
        let p = RigidBodyParams::unit();
        let mut s = VehicleState::at_rest(Vec3::zeros());
        s.omega = Vec3::new(1.0, 0.0, 0.0);
        let d = state_derivative(&s, &Command::zero(), &Vec3::zeros(), &p);
        assert_eq!(d.omega, Vec3::zeros());
    }

    proptest! {
        #[test]
        fn quaternion_rate_is_tangent(
            q in prop::array::uniform4(-1.0f64..1.0).prop_filter("nz", |a| a.iter().map(|x| x*x).sum::<f64>() > 1e-3),
            w in prop::array::uniform3(-20.0f64..20.0),
            thrust in 0.0f64..50.0,
        ) {
            let p = RigidBodyParams::unit();
            let s = VehicleState {
                position: Vec3::zeros(),
                velocity: Vec3::zeros(),
                attitude: UnitQuat::from_array(q).unwrap(),
                omega: Vec3::from(w),
            };
            let u = Command { thrust, torque: Vec3::zeros() };
            let d = state_derivative(&s, &u, &Vec3::zeros(), &p);
            prop_assert!(s.attitude.to_vec4().dot(&d.attitude).abs() < 1e-12);
        }
    }
}
