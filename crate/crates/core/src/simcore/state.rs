use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Number of actuated joints (hip + knee on each of four legs).
pub const NUM_JOINTS: usize = 8;
/// Number of legs, ordered front-left, front-right, rear-left, rear-right.
pub const NUM_LEGS: usize = 4;
/// Generalized coordinates: base x, base z, pitch, then the joints.
pub const NUM_DOF: usize = 3 + NUM_JOINTS;

pub const LEG_NAMES: [&str; NUM_LEGS] = ["FL", "FR", "RL", "RR"];

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Signed shortest-arc difference `a - b`, in (-pi, pi].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Full physical state of the planar quadruped.
///
/// Joint `2*i` is the hip of leg `i`, joint `2*i + 1` its knee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
    pub vx: f64,
    pub vz: f64,
    pub pitch_rate: f64,
    pub joint_pos: [f64; NUM_JOINTS],
    pub joint_vel: [f64; NUM_JOINTS],
    pub contacts: [bool; NUM_LEGS],
}

impl Default for AgentState {
    fn default() -> Self {
        Self {
            x: 0.0,
            z: 0.0,
            pitch: 0.0,
            vx: 0.0,
            vz: 0.0,
            pitch_rate: 0.0,
            joint_pos: [0.0; NUM_JOINTS],
            joint_vel: [0.0; NUM_JOINTS],
            contacts: [false; NUM_LEGS],
        }
    }
}

impl AgentState {
    pub fn is_finite(&self) -> bool {
        [self.x, self.z, self.pitch, self.vx, self.vz, self.pitch_rate]
            .iter()
            .chain(self.joint_pos.iter())
            .chain(self.joint_vel.iter())
            .all(|v| v.is_finite())
    }

    /// Generalized positions `[x, z, pitch, joints...]`.
    pub fn positions(&self) -> [f64; NUM_DOF] {
        let mut q = [0.0; NUM_DOF];
        q[0] = self.x;
        q[1] = self.z;
        q[2] = self.pitch;
        q[3..].copy_from_slice(&self.joint_pos);
        q
    }

    /// Generalized velocities matching [`AgentState::positions`].
    pub fn velocities(&self) -> [f64; NUM_DOF] {
        let mut v = [0.0; NUM_DOF];
        v[0] = self.vx;
        v[1] = self.vz;
        v[2] = self.pitch_rate;
        v[3..].copy_from_slice(&self.joint_vel);
        v
    }

    pub fn from_generalized(q: &[f64; NUM_DOF], v: &[f64; NUM_DOF], contacts: [bool; NUM_LEGS]) -> Self {
        let mut joint_pos = [0.0; NUM_JOINTS];
        let mut joint_vel = [0.0; NUM_JOINTS];
        joint_pos.copy_from_slice(&q[3..]);
        joint_vel.copy_from_slice(&v[3..]);
        Self {
            x: q[0],
            z: q[1],
            pitch: wrap_angle(q[2]),
            vx: v[0],
            vz: v[1],
            pitch_rate: v[2],
            joint_pos,
            joint_vel,
            contacts,
        }
    }

    /// Proprioceptive features without the unobservable forward position:
    /// z, pitch, vx, vz, pitch rate, joint angles, joint velocities, contacts (25 values).
    pub fn features(&self) -> [f64; STATE_FEATURES] {
        let mut f = [0.0; STATE_FEATURES];
        f[..TARGET_FEATURES].copy_from_slice(&TargetState::from(*self).to_array());
        for (i, c) in self.contacts.iter().enumerate() {
            f[TARGET_FEATURES + i] = if *c { 1.0 } else { 0.0 };
        }
        f
    }
}

/// Length of [`AgentState::features`].
pub const STATE_FEATURES: usize = TARGET_FEATURES + NUM_LEGS;
/// Length of [`TargetState::to_array`].
pub const TARGET_FEATURES: usize = 5 + 2 * NUM_JOINTS;

/// An agent state without foot-contact indicators or forward position.
/// This is what the composer is asked to reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub z: f64,
    pub pitch: f64,
    pub vx: f64,
    pub vz: f64,
    pub pitch_rate: f64,
    pub joint_pos: [f64; NUM_JOINTS],
    pub joint_vel: [f64; NUM_JOINTS],
}

impl From<AgentState> for TargetState {
    fn from(s: AgentState) -> Self {
        Self {
            z: s.z,
            pitch: s.pitch,
            vx: s.vx,
            vz: s.vz,
            pitch_rate: s.pitch_rate,
            joint_pos: s.joint_pos,
            joint_vel: s.joint_vel,
        }
    }
}

impl TargetState {
    /// `[z, pitch, vx, vz, pitch_rate, joint_pos.., joint_vel..]`
    pub fn to_array(&self) -> [f64; TARGET_FEATURES] {
        let mut f = [0.0; TARGET_FEATURES];
        f[0] = self.z;
        f[1] = self.pitch;
        f[2] = self.vx;
        f[3] = self.vz;
        f[4] = self.pitch_rate;
        f[5..5 + NUM_JOINTS].copy_from_slice(&self.joint_pos);
        f[5 + NUM_JOINTS..].copy_from_slice(&self.joint_vel);
        f
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Target joint angles for the PD controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub joint_targets: [f64; NUM_JOINTS],
}

impl ActionCommand {
    pub fn new(joint_targets: [f64; NUM_JOINTS]) -> Self {
        Self { joint_targets }
    }

    pub fn is_finite(&self) -> bool {
        self.joint_targets.iter().all(|v| v.is_finite())
    }
}
