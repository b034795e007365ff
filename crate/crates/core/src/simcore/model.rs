use serde::{Deserialize, Serialize};

use super::state::{NUM_JOINTS, NUM_LEGS};
use crate::error::ConfigError;

/// Geometry and mass of one two-link leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry {
    /// Hip position along the torso axis, torso frame (m). Positive is forward.
    pub hip_x: f64,
    pub thigh_mass: f64,
    pub thigh_length: f64,
    pub calf_mass: f64,
    pub calf_length: f64,
}

/// Inclusive joint range in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRange {
    pub lower: f64,
    pub upper: f64,
}

impl JointRange {
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// Planar stand-in for a 12 kg class quadruped.
///
/// Hip angles are measured from the torso's downward normal, positive swinging
/// the foot forward. Knee angles are relative to the thigh; positive values
/// fold the knee backward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub torso_mass: f64,
    pub torso_inertia: f64,
    /// Half extents of the torso box (m).
    pub torso_half_length: f64,
    pub torso_half_height: f64,
    pub legs: [LegGeometry; NUM_LEGS],
    pub hip_range: JointRange,
    pub knee_range: JointRange,
    pub torque_limit: f64,
    pub kp: f64,
    pub kd: f64,
    /// Reflected rotor inertia added on each joint axis (kg m^2).
    pub armature: f64,
    pub foot_radius: f64,
    /// Collision radius of the knee joint used by failure detection.
    pub knee_radius: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        let leg = |hip_x| LegGeometry {
            hip_x,
            thigh_mass: 1.0,
            thigh_length: 0.2,
            calf_mass: 0.2,
            calf_length: 0.2,
        };
        Self {
            torso_mass: 6.0,
            torso_inertia: 0.07,
            torso_half_length: 0.2,
            torso_half_height: 0.05,
            legs: [leg(0.18), leg(0.18), leg(-0.18), leg(-0.18)],
            hip_range: JointRange { lower: -1.6, upper: 1.2 },
            knee_range: JointRange { lower: 0.3, upper: 2.7 },
            torque_limit: 33.5,
            kp: 50.0,
            kd: 1.2,
            armature: 0.01,
            foot_radius: 0.02,
            knee_radius: 0.015,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("torso_mass", self.torso_mass)?;
        positive("torso_inertia", self.torso_inertia)?;
        positive("torso_half_length", self.torso_half_length)?;
        positive("torso_half_height", self.torso_half_height)?;
        for (i, leg) in self.legs.iter().enumerate() {
            positive(&format!("legs[{i}].thigh_mass"), leg.thigh_mass)?;
            positive(&format!("legs[{i}].thigh_length"), leg.thigh_length)?;
            positive(&format!("legs[{i}].calf_mass"), leg.calf_mass)?;
            positive(&format!("legs[{i}].calf_length"), leg.calf_length)?;
        }
        for (name, r) in [("hip_range", self.hip_range), ("knee_range", self.knee_range)] {
            if !(r.lower < r.upper) {
                return Err(ConfigError::Invalid(format!(
                    "{name}: lower {} must be below upper {}",
                    r.lower, r.upper
                )));
            }
        }
        positive("torque_limit", self.torque_limit)?;
        positive("kp", self.kp)?;
        positive("foot_radius", self.foot_radius)?;
        if self.kd < 0.0 || self.armature < 0.0 || self.knee_radius < 0.0 {
            return Err(ConfigError::Invalid("kd, armature and knee_radius must be non-negative".into()));
        }
        Ok(())
    }

    pub fn joint_range(&self, joint: usize) -> JointRange {
        if joint % 2 == 0 {
            self.hip_range
        } else {
            self.knee_range
        }
    }

    pub fn clamp_targets(&self, targets: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
        let mut out = *targets;
        for (j, v) in out.iter_mut().enumerate() {
            *v = self.joint_range(j).clamp(*v);
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.torso_mass + self.legs.iter().map(|l| l.thigh_mass + l.calf_mass).sum::<f64>()
    }

    /// Hip and knee angles placing the foot at `(dx, dz)` from the hip in the
    /// torso frame, knee folded backward. `None` when out of reach.
    pub fn leg_ik(&self, leg: usize, dx: f64, dz: f64) -> Option<(f64, f64)> {
        let g = &self.legs[leg];
        let (l1, l2) = (g.thigh_length, g.calf_length);
        let d2 = dx * dx + dz * dz;
        let d = d2.sqrt();
        if d > l1 + l2 || d < (l1 - l2).abs() || d == 0.0 {
            return None;
        }
        let cos_knee_inner = ((l1 * l1 + l2 * l2 - d2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
        let knee = std::f64::consts::PI - cos_knee_inner.acos();
        let cos_hip_inner = ((l1 * l1 + d2 - l2 * l2) / (2.0 * l1 * d)).clamp(-1.0, 1.0);
        let toward_foot = dx.atan2(-dz);
        Some((toward_foot - cos_hip_inner.acos(), knee))
    }

    /// Foot position relative to the hip in the torso frame.
    pub fn leg_fk(&self, leg: usize, hip: f64, knee: f64) -> (f64, f64) {
        let g = &self.legs[leg];
        let a = hip;
        let b = hip + knee;
        (
            g.thigh_length * a.sin() + g.calf_length * b.sin(),
            -g.thigh_length * a.cos() - g.calf_length * b.cos(),
        )
    }
}

/// Penalty contact parameters for the foot-ground interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Normal spring stiffness (N/m).
    pub stiffness: f64,
    /// Normal damping (N s/m).
    pub damping: f64,
    /// Viscous tangential coefficient before the Coulomb cap (N s/m).
    pub tangential_damping: f64,
    /// Friction coefficient used when no randomization is applied.
    pub friction: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 20_000.0,
            damping: 400.0,
            tangential_damping: 2_000.0,
            friction: 0.8,
        }
    }
}

impl ContactParams {
    /// Per-foot static deflection when the robot's weight is shared evenly by
    /// `feet` feet: `m g / (feet * k)`.
    pub fn static_deflection(&self, model: &RobotModel, gravity: f64, feet: usize) -> f64 {
        model.total_mass() * gravity / (feet as f64 * self.stiffness)
    }
}

/// Integration rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    /// Physics step (s).
    pub dt: f64,
    /// Physics steps per control step.
    pub decimation: u32,
    /// Physics steps taken so far.
    #[serde(default)]
    pub elapsed_steps: u64,
}

impl Default for SimClock {
    fn default() -> Self {
        Self {
            dt: 1.0 / 240.0,
            decimation: 8,
            elapsed_steps: 0,
        }
    }
}

impl SimClock {
    pub fn control_dt(&self) -> f64 {
        self.dt * self.decimation as f64
    }

    pub fn sim_time(&self) -> f64 {
        self.elapsed_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ConfigError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.decimation < 1 {
            return Err(ConfigError::Invalid("decimation must be at least 1".into()));
        }
        Ok(())
    }
}
