//! Analytic reference trajectories with derivatives up to snap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{Vec3, E_Z};

/// Desired position and its first four time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RefPoint {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub jerk: Vec3,
    pub snap: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// `[a_x sin(w_x t), a_y sin(w_y t), z0 + climb t]`.
    ///
    /// The defaults reproduce `[4 sin(0.15t) cos(0.15t), 4 sin(0.15t), 2 + 0.1t]`
    /// after folding the x product into a single sine.
    LissajousClimb {
        #[serde(default = "defaults::ax")]
        x_amplitude: f64,
        #[serde(default = "defaults::wx")]
        x_rate: f64,
        #[serde(default = "defaults::ay")]
        y_amplitude: f64,
        #[serde(default = "defaults::wy")]
        y_rate: f64,
        #[serde(default = "defaults::z0")]
        z_offset: f64,
        #[serde(default = "defaults::climb")]
        climb_rate: f64,
    },
    Hover { position: [f64; 3] },
    /// Horizontal circle of `radius` about `center`, optionally climbing.
    Circle {
        center: [f64; 3],
        radius: f64,
        rate: f64,
        #[serde(default)]
        climb_rate: f64,
    },
    /// Per-axis polynomial, coefficients in ascending powers of `t`.
    Polynomial { x: Vec<f64>, y: Vec<f64>, z: Vec<f64> },
}

mod defaults {
    pub fn ax() -> f64 {
        2.0
    }
    pub fn wx() -> f64 {
        0.3
    }
    pub fn ay() -> f64 {
        4.0
    }
    pub fn wy() -> f64 {
        0.15
    }
    pub fn z0() -> f64 {
        2.0
    }
    pub fn climb() -> f64 {
        0.1
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("trajectory parameter `{0}` is not finite")]
    NonFinite(&'static str),
    #[error(
        "desired acceleration reaches the thrust singularity at t = {time} s (distance {margin:e} m/s^2)"
    )]
    Infeasible { time: f64, margin: f64 },
}

impl TrajectorySpec {
    pub fn reference() -> Self {
        Self::LissajousClimb {
            x_amplitude: defaults::ax(),
            x_rate: defaults::wx(),
            y_amplitude: defaults::ay(),
            y_rate: defaults::wy(),
            z_offset: defaults::z0(),
            climb_rate: defaults::climb(),
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let finite = match self {
            Self::LissajousClimb {
                x_amplitude,
                x_rate,
                y_amplitude,
                y_rate,
                z_offset,
                climb_rate,
            } => [x_amplitude, x_rate, y_amplitude, y_rate, z_offset, climb_rate]
                .iter()
                .all(|x| x.is_finite()),
            Self::Hover { position } => position.iter().all(|x| x.is_finite()),
            Self::Circle {
                center,
                radius,
                rate,
                climb_rate,
            } => center
                .iter()
                .chain([radius, rate, climb_rate])
                .all(|x| x.is_finite()),
            Self::Polynomial { x, y, z } => x.iter().chain(y).chain(z).all(|c| c.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err(TrajectoryError::NonFinite(self.kind_name()))
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::LissajousClimb { .. } => "lissajous-climb",
            Self::Hover { .. } => "hover",
            Self::Circle { .. } => "circle",
            Self::Polynomial { .. } => "polynomial",
        }
    }

    pub fn eval(&self, t: f64) -> RefPoint {
        match self {
            Self::LissajousClimb {
                x_amplitude,
                x_rate,
                y_amplitude,
                y_rate,
                z_offset,
                climb_rate,
            } => {
                let x = sine_derivatives(*x_amplitude, *x_rate, t);
                let y = sine_derivatives(*y_amplitude, *y_rate, t);
                let z = [z_offset + climb_rate * t, *climb_rate, 0.0, 0.0, 0.0];
                assemble(x, y, z)
            }
            Self::Hover { position } => RefPoint {
                position: Vec3::from(*position),
                ..RefPoint::default()
            },
            Self::Circle {
                center,
                radius,
                rate,
                climb_rate,
            } => {
                // cos(wt) = sin(wt + π/2)
                let x = sine_derivatives_phase(*radius, *rate, std::f64::consts::FRAC_PI_2, t);
                let y = sine_derivatives(*radius, *rate, t);
                let z = [climb_rate * t, *climb_rate, 0.0, 0.0, 0.0];
                let mut r = assemble(x, y, z);
                r.position += Vec3::from(*center);
                r
            }
            Self::Polynomial { x, y, z } => {
                assemble(poly_derivatives(x, t), poly_derivatives(y, t), poly_derivatives(z, t))
            }
        }
    }
}

fn assemble(x: [f64; 5], y: [f64; 5], z: [f64; 5]) -> RefPoint {
    let v = |k: usize| Vec3::new(x[k], y[k], z[k]);
    RefPoint {
        position: v(0),
        velocity: v(1),
        acceleration: v(2),
        jerk: v(3),
        snap: v(4),
    }
}

fn sine_derivatives(a: f64, w: f64, t: f64) -> [f64; 5] {
    sine_derivatives_phase(a, w, 0.0, t)
}

/// `a sin(w t + φ)` and derivatives one through four.
fn sine_derivatives_phase(a: f64, w: f64, phase: f64, t: f64) -> [f64; 5] {
    let (s, c) = (w * t + phase).sin_cos();
    let w2 = w * w;
    [
        a * s,
        a * w * c,
        -a * w2 * s,
        -a * w2 * w * c,
        a * w2 * w2 * s,
    ]
}

/// Value and first four derivatives of `Σ c_k t^k` by repeated Horner passes.
fn poly_derivatives(coeffs: &[f64], t: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    let mut c: Vec<f64> = coeffs.to_vec();
    for slot in out.iter_mut() {
        *slot = c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck);
        c = c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &ck)| k as f64 * ck)
            .collect();
    }
    out
}

/// Result of sampling a trajectory for thrust-direction singularities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// Smallest distance from the desired acceleration to `{[0, 0, x] : x ≥ g}`.
    pub min_margin: f64,
    pub min_margin_time: f64,
    /// First sample where the margin drops to the tolerance or below.
    pub first_violation: Option<f64>,
    pub samples: usize,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn ensure(&self) -> Result<(), TrajectoryError> {
        match self.first_violation {
            None => Ok(()),
            Some(time) => Err(TrajectoryError::Infeasible {
                time,
                margin: self.min_margin,
            }),
        }
    }
}

/// Distance from `a` to the set of accelerations pointing straight along
/// gravity with magnitude at least `g`, where `[0, 0, x]` for `x ≥ g` leaves
/// no thrust direction.
pub fn singular_set_distance(a: &Vec3, g: f64) -> f64 {
    let lateral = a.x.hypot(a.y);
    let along = a.dot(&E_Z);
    if along >= g {
        lateral
    } else {
        lateral.hypot(g - along)
    }
}

pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Samples the desired acceleration on `[0, horizon]` at `rate` Hz.
pub fn check_feasible(spec: &TrajectorySpec, horizon: f64, rate: f64, g: f64) -> FeasibilityReport {
    let n = (horizon * rate).ceil().max(0.0) as usize;
    let mut report = FeasibilityReport {
        min_margin: f64::INFINITY,
        min_margin_time: 0.0,
        first_violation: None,
        samples: n + 1,
    };
    for k in 0..=n {
        let t = (k as f64 / rate).min(horizon);
        let margin = singular_set_distance(&spec.eval(t).acceleration, g);
        if margin < report.min_margin || margin.is_nan() {
            report.min_margin = margin;
            report.min_margin_time = t;
        }
        if report.first_violation.is_none() && !(margin > FEASIBILITY_TOL) {
            report.first_violation = Some(t);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn specs() -> Vec<TrajectorySpec> {
        vec![
            TrajectorySpec::reference(),
            TrajectorySpec::Hover {
                position: [1.0, -2.0, 3.0],
            },
            TrajectorySpec::Circle {
                center: [0.5, 0.0, 1.0],
                radius: 1.5,
                rate: 0.8,
                climb_rate: -0.2,
            },
            TrajectorySpec::Polynomial {
                x: vec![1.0, 0.5, -0.25, 0.01, 0.002],
                y: vec![0.0, 0.0, 0.3],
                z: vec![2.0, -0.1, 0.0, 0.0, 0.0, 1e-4],
            },
        ]
    }

    #[test]
    fn reference_at_origin() {
        let r = TrajectorySpec::reference().eval(0.0);
        assert_eq!(r.position, Vec3::new(0.0, 0.0, 2.0));
        assert!((r.velocity - Vec3::new(0.6, 0.6, 0.1)).norm() < 1e-15);
    }

    #[test]
    fn reference_matches_unfolded_product() {
        let spec = TrajectorySpec::reference();
        for k in 0..100 {
            let t = 0.37 * k as f64;
            let x = 4.0 * (0.15 * t).sin() * (0.15 * t).cos();
            assert!((spec.eval(t).position.x - x).abs() < 1e-14);
        }
    }

    #[test]
    fn hover_has_zero_derivatives() {
        let r = TrajectorySpec::Hover {
            position: [1.0, 2.0, 3.0],
        }
        .eval(12.5);
        assert_eq!(r.velocity, Vec3::zeros());
        assert_eq!(r.acceleration, Vec3::zeros());
        assert_eq!(r.jerk, Vec3::zeros());
        assert_eq!(r.snap, Vec3::zeros());
    }

    #[test]
    fn feasibility_examples() {
        let g = 9.81;
        let rep = check_feasible(&TrajectorySpec::reference(), 30.0, 1000.0, g);
        assert!(rep.feasible());
        assert_eq!(rep.samples, 30_001);
        // Vertical acceleration is zero, so the margin is at least g.
        assert!(rep.min_margin >= g);

        let fall = TrajectorySpec::Polynomial {
            x: vec![0.0],
            y: vec![0.0],
            z: vec![0.0, 0.0, 0.5 * g],
        };
        let rep = check_feasible(&fall, 5.0, 1000.0, g);
        assert_eq!(rep.first_violation, Some(0.0));
        assert!(matches!(rep.ensure(), Err(TrajectoryError::Infeasible { time, .. }) if time == 0.0));

        let hover = TrajectorySpec::Hover { position: [0.0; 3] };
        assert!(check_feasible(&hover, 5.0, 1000.0, g).feasible());
    }

    #[test]
    fn singular_distance_geometry() {
        let g = 9.81;
        assert_eq!(singular_set_distance(&Vec3::zeros(), g), g);
        assert_eq!(singular_set_distance(&Vec3::new(3.0, 4.0, 20.0), g), 5.0);
        assert!((singular_set_distance(&Vec3::new(0.0, 0.0, g), g)).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn derivatives_match_finite_differences(idx in 0usize..4, t in 0.0f64..30.0) {
            let spec = &specs()[idx];
            let h = 1e-4;
            let p = spec.eval(t + h);
            let m = spec.eval(t - h);
            let c = spec.eval(t);
            let d = |a: &Vec3, b: &Vec3, x: &Vec3| ((a - b) / (2.0 * h) - x).norm();
            prop_assert!(d(&p.position, &m.position, &c.velocity) < 1e-6);
            prop_assert!(d(&p.velocity, &m.velocity, &c.acceleration) < 1e-6);
            prop_assert!(d(&p.acceleration, &m.acceleration, &c.jerk) < 1e-6);
            prop_assert!(d(&p.jerk, &m.jerk, &c.snap) < 1e-4);
        }
    }
}
