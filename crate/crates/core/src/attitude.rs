//! Unit-quaternion algebra in the vector-first layout `Q = [q1, q2, q3, q0]`.
//!
//! Conventions used throughout the crate:
//!
//! * `Q1 ⊙ Q2` is the Hamilton product with vector part
//!   `q01·q2 + q02·q1 + q1 × q2` and scalar part `q01·q02 − q1·q2`.
//! * [`UnitQuat::rotation`] returns the inertial-to-body matrix
//!   `R = (q0² − q·q) I + 2 q qᵀ − 2 q0 [q]×`, so `Rᵀ e_z` is the body thrust
//!   axis written in the inertial frame and `R(Q1 ⊙ Q2) = R(Q2) R(Q1)`.
//! * Kinematics are `Q̇ = ½ Ξ(Q) Ω` with `Ξ(Q) = [q0 I + [q]×; −qᵀ]` (no extra
//!   one-half inside Ξ), which gives `Ṙ = −[Ω]× R` for body rates `Ω`.

use nalgebra::{Matrix3, Matrix4x3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec4 = Vector4<f64>;

/// 4×3 kinematics map Ξ(Q).
pub type XiMatrix = Matrix4x3<f64>;

/// Inertial unit vectors.
pub const E_X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
pub const E_Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
pub const E_Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Skew-symmetric cross-product matrix, `skew(x) * y == x × y`.
#[inline]
pub fn skew(x: &Vec3) -> Mat3 {
    Mat3::new(0.0, -x.z, x.y, x.z, 0.0, -x.x, -x.y, x.x, 0.0)
}

/// Three-way sign with an exact zero branch.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Attitude quaternion with vector part `v` and scalar part `w`.
///
/// Every constructor renormalizes; the sign is never flipped implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    v: Vec3,
    w: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        v: Vec3::new(0.0, 0.0, 0.0),
        w: 1.0,
    };

    /// Normalizes `[v, w]`. Returns `None` for a zero or non-finite input.
    pub fn try_new(v: Vec3, w: f64) -> Option<Self> {
        let n = (v.norm_squared() + w * w).sqrt();
        if !n.is_finite() || n == 0.0 {
            return None;
        }
        Some(Self { v: v / n, w: w / n })
    }

    /// Panics on a zero or non-finite input; use [`UnitQuat::try_new`] for
    /// untrusted data.
    pub fn new(v: Vec3, w: f64) -> Self {
        Self::try_new(v, w).expect("quaternion must be finite and non-zero")
    }

    /// From `[q1, q2, q3, q0]`.
    pub fn from_array(a: [f64; 4]) -> Option<Self> {
        Self::try_new(Vec3::new(a[0], a[1], a[2]), a[3])
    }

    pub fn from_vec4(a: &Vec4) -> Option<Self> {
        Self::try_new(Vec3::new(a[0], a[1], a[2]), a[3])
    }

    /// Rotation by `angle` about a unit `axis`, in the convention where
    /// `rotation()` maps inertial coordinates to body coordinates.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(axis.normalize() * s, c)
    }

    #[inline]
    pub fn vector(&self) -> Vec3 {
        self.v
    }

    #[inline]
    pub fn scalar(&self) -> f64 {
        self.w
    }

    /// `[q1, q2, q3, q0]`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.v.x, self.v.y, self.v.z, self.w]
    }

    pub fn to_vec4(&self) -> Vec4 {
        Vec4::new(self.v.x, self.v.y, self.v.z, self.w)
    }

    pub fn norm(&self) -> f64 {
        (self.v.norm_squared() + self.w * self.w).sqrt()
    }

    /// `self ⊙ rhs`, renormalized.
    pub fn mul(&self, rhs: &UnitQuat) -> UnitQuat {
        let v = self.w * rhs.v + rhs.w * self.v + self.v.cross(&rhs.v);
        let w = self.w * rhs.w - self.v.dot(&rhs.v);
        UnitQuat::new(v, w)
    }

    /// `[−q, q0]`.
    pub fn inverse(&self) -> UnitQuat {
        UnitQuat {
            v: -self.v,
            w: self.w,
        }
    }

    /// Negates all four components. Same physical attitude.
    pub fn negated(&self) -> UnitQuat {
        UnitQuat {
            v: -self.v,
            w: -self.w,
        }
    }

    /// Inertial-to-body rotation matrix.
    pub fn rotation(&self) -> Mat3 {
        let q = self.v;
        let q0 = self.w;
        Mat3::identity() * (q0 * q0 - q.dot(&q)) + 2.0 * q * q.transpose() - 2.0 * q0 * skew(&q)
    }

    /// Ξ(Q) = [q0 I + [q]×; −qᵀ].
    pub fn xi(&self) -> XiMatrix {
        let top = Mat3::identity() * self.w + skew(&self.v);
        let mut xi = XiMatrix::zeros();
        xi.fixed_view_mut::<3, 3>(0, 0).copy_from(&top);
        xi.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-self.v.transpose()));
        xi
    }

    /// Quaternion rate `½ Ξ(Q) Ω` for body angular velocity `omega`.
    pub fn rate(&self, omega: &Vec3) -> Vec4 {
        0.5 * self.xi() * omega
    }

    /// Body rate recovered from a quaternion rate, the left inverse of
    /// [`UnitQuat::rate`] (`Ξᵀ Ξ = I₃` on the unit sphere).
    pub fn body_rate_from(&self, q_dot: &Vec4) -> Vec3 {
        2.0 * self.xi().transpose() * q_dot
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Attitude error `Q̃ = Q_d⁻¹ ⊙ Q`.
pub fn quat_error(desired: &UnitQuat, actual: &UnitQuat) -> UnitQuat {
    desired.inverse().mul(actual)
}

/// `q̄ = [q̃2, −q̃1, −q̃0]`, the companion vector of an error quaternion that
/// satisfies `(R(Q)ᵀ − R(Q_d)ᵀ) e_z = 2 R(Q)ᵀ [q̄]× q̃`.
pub fn qbar(err: &UnitQuat) -> Vec3 {
    let q = err.vector();
    Vec3::new(q.y, -q.x, -err.scalar())
}

/// Time derivative of [`qbar`] given `d/dt [q̃, q̃0]`.
pub fn qbar_rate(err_dot: &Vec4) -> Vec3 {
    Vec3::new(err_dot[1], -err_dot[0], -err_dot[3])
}
