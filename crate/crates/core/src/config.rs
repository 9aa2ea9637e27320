//! TOML scenario files.
//!
//! Every section except `[trajectory]` may be omitted; missing keys take the
//! reference values. Unknown keys are rejected. [`ConfigFile::effective`]
//! fills in every derived default so the result can be echoed and reloaded
//! into the identical scenario.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{Mat3, UnitQuat, Vec3};
use crate::controller::{disturbance_estimate, Gains, Tolerances};
use crate::dynamics::{DisturbanceModel, ParamError, RigidBodyParams, VehicleState, STANDARD_GRAVITY};
use crate::sim::{ControlUpdate, Scenario, ScenarioError};
use crate::trajectory::TrajectorySpec;

/// Allowed `|‖Q(0)‖ − 1|` before the initial attitude is rejected.
pub const QUATERNION_NORM_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl From<ParamError> for ConfigError {
    fn from(e: ParamError) -> Self {
        ConfigError::Scenario(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub vehicle: VehicleSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub disturbance: DisturbanceModel,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub t_end: f64,
    pub dt: f64,
    /// RK4 steps per control period.
    pub substeps: u32,
    /// `hold` (zero-order hold per period) or `continuous`.
    pub control_update: ControlUpdate,
    pub thrust_tolerance: f64,
    pub q0_tolerance: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let tol = Tolerances::default();
        Self {
            t_end: 30.0,
            dt: 1e-3,
            substeps: 1,
            control_update: ControlUpdate::Hold,
            thrust_tolerance: tol.thrust,
            q0_tolerance: tol.q0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSection {
    pub mass: f64,
    /// Row-major inertia matrix (kg·m²).
    pub inertia: [[f64; 3]; 3],
    pub gravity: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            gravity: STANDARD_GRAVITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// `[q1, q2, q3, q0]`, normalized on load.
    pub attitude: [f64; 4],
    pub omega: [f64; 3],
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            velocity: [0.0; 3],
            attitude: [0.0, 0.0, 0.0, 1.0],
            omega: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSection {
    pub k_s: f64,
    pub beta_t: f64,
    pub k_t: [f64; 3],
    pub k_eta: f64,
    pub k_theta: f64,
    pub k_q: f64,
    pub boundary_layer: f64,
    /// Robust gain `β`. Defaults to `Δ̂ + robust_margin`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust_gain: Option<f64>,
    /// `β₀` in `β ≥ Δ̂ + β₀`.
    pub robust_margin: f64,
    /// Velocity-error margin in `Δ̂`.
    pub velocity_margin: f64,
    /// Declared per-axis disturbance bound (N). Defaults to the model's peak.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disturbance_bound: Option<[f64; 3]>,
    /// Accept `β < Δ̂ + β₀`, for ablation runs.
    pub allow_weak_robust_gain: bool,
    pub unwinding_flip: bool,
}

impl Default for GainsSection {
    fn default() -> Self {
        let g = Gains::reference(0.0);
        Self {
            k_s: g.k_s,
            beta_t: g.beta_t,
            k_t: g.k_t.into(),
            k_eta: g.k_eta,
            k_theta: g.k_theta,
            k_q: g.k_q,
            boundary_layer: g.boundary_layer,
            robust_gain: None,
            robust_margin: g.beta0,
            velocity_margin: 1.0,
            disturbance_bound: None,
            allow_weak_robust_gain: false,
            unwinding_flip: g.unwinding_flip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Trace file name; defaults to `<config stem>.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    /// Report file name; defaults to `<config stem>.report.json`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    /// Render figures next to the trace after a successful run.
    pub plot: bool,
    /// Plot every n-th sample.
    pub decimate: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            trace: None,
            report: None,
            plot: false,
            decimate: 1,
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// The reference scenario as a config.
    pub fn reference() -> Self {
        let sc = Scenario::reference();
        Self {
            simulation: SimulationSection::default(),
            vehicle: VehicleSection::default(),
            initial: InitialSection {
                attitude: sc.initial.attitude.to_array(),
                ..InitialSection::default()
            },
            trajectory: sc.trajectory,
            disturbance: sc.disturbance,
            gains: GainsSection::default(),
            output: OutputSection::default(),
        }
        .effective()
        .expect("reference config is valid")
    }

    fn params(&self) -> Result<RigidBodyParams, ConfigError> {
        let v = &self.vehicle;
        let j = Mat3::from_fn(|r, c| v.inertia[r][c]);
        Ok(RigidBodyParams::new(v.mass, j, v.gravity)?)
    }

    fn bound(&self) -> Vec3 {
        match self.gains.disturbance_bound {
            Some(b) => Vec3::from(b),
            None => self.disturbance.peak(),
        }
    }

    /// Copy with every optional value resolved.
    pub fn effective(&self) -> Result<Self, ConfigError> {
        let params = self.params()?;
        let bound = self.bound();
        let g = &self.gains;
        let delta_hat = disturbance_estimate(&bound, params.mass(), g.k_s, g.velocity_margin);
        let mut out = self.clone();
        out.gains.disturbance_bound = Some(bound.into());
        out.gains.robust_gain = Some(g.robust_gain.unwrap_or(delta_hat + g.robust_margin));
        Ok(out)
    }

    /// Builds and validates the scenario.
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let eff = self.effective()?;
        let params = eff.params()?;
        let s = &eff.simulation;
        let g = &eff.gains;
        let init = &eff.initial;

        if g.velocity_margin < 0.0 || !g.velocity_margin.is_finite() {
            return Err(ConfigError::Invalid {
                field: "gains.velocity_margin",
                reason: format!("must be finite and non-negative, got {}", g.velocity_margin),
            });
        }
        if let Some(b) = g.disturbance_bound {
            if b.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(ConfigError::Invalid {
                    field: "gains.disturbance_bound",
                    reason: format!("must be finite and non-negative, got {b:?}"),
                });
            }
        }
        let qn = init.attitude.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((qn - 1.0).abs() <= QUATERNION_NORM_TOL) {
            return Err(ConfigError::Invalid {
                field: "initial.attitude",
                reason: format!("norm {qn} is not within {QUATERNION_NORM_TOL} of 1"),
            });
        }
        if eff.output.decimate == 0 {
            return Err(ConfigError::Invalid {
                field: "output.decimate",
                reason: "must be at least 1".into(),
            });
        }
        let initial = VehicleState {
            position: init.position.into(),
            velocity: init.velocity.into(),
            attitude: UnitQuat::from_array(init.attitude).ok_or(ConfigError::Invalid {
                field: "initial.attitude",
                reason: "not finite".into(),
            })?,
            omega: init.omega.into(),
        };
        let gains = Gains {
            k_s: g.k_s,
            beta_t: g.beta_t,
            k_t: g.k_t.into(),
            beta: g.robust_gain.expect("resolved"),
            beta0: g.robust_margin,
            k_eta: g.k_eta,
            k_theta: g.k_theta,
            k_q: g.k_q,
            boundary_layer: g.boundary_layer,
            unwinding_flip: g.unwinding_flip,
        };
        let sc = Scenario {
            trajectory: eff.trajectory.clone(),
            disturbance: eff.disturbance.clone(),
            disturbance_bound: eff.bound(),
            params,
            gains,
            velocity_margin: g.velocity_margin,
            enforce_robust_bound: !g.allow_weak_robust_gain,
            tolerances: Tolerances {
                thrust: s.thrust_tolerance,
                q0: s.q0_tolerance,
            },
            initial,
            t_end: s.t_end,
            dt: s.dt,
            substeps: s.substeps,
            control_update: s.control_update,
        };
        sc.validate()?;
        Ok(sc)
    }
}
