//! Finite-time sliding-mode trajectory tracking for a quadrotor modelled as a
//! rigid body with thrust along the body `z` axis and three-axis torque.
//!
//! Frames are north-east-down with gravity along `+z`. Quaternions are stored
//! vector-first and map inertial vectors into the body frame.

// `!(x > tol)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attitude;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod sim;
pub mod trace;
pub mod trajectory;
pub mod validation;

pub use attitude::{UnitQuat, Vec3};
pub use controller::{control_step, ControlOutput, Gains};
pub use dynamics::{DisturbanceModel, RigidBodyParams, VehicleState};
pub use sim::{run, Scenario, SimTrace};
pub use trajectory::TrajectorySpec;
