use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{ContactParams, RobotModel};
use super::state::{AgentState, ActionCommand};
use crate::error::ConfigError;

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

/// Domain randomization parameters. Noise amplitudes are half-widths of
/// uniform distributions centred on zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationConfig {
    pub action_noise: f64,
    /// Multiplier on every link mass (and inertia).
    pub mass_scale: Range,
    pub kp: Range,
    pub kd: Range,
    pub friction: Range,
    pub noise_orientation: f64,
    pub noise_linear_velocity: f64,
    pub noise_angular_velocity: f64,
    pub noise_joint_angles: f64,
    pub noise_joint_velocity: f64,
    /// Probability of reporting a foot contact as absent.
    pub contact_dropout: f64,
}

impl RandomizationConfig {
    /// No perturbation at all; gains and friction come from the model.
    pub fn none(model: &RobotModel, contact: &ContactParams) -> Self {
        Self {
            action_noise: 0.0,
            mass_scale: Range::fixed(1.0),
            kp: Range::fixed(model.kp),
            kd: Range::fixed(model.kd),
            friction: Range::fixed(contact.friction),
            noise_orientation: 0.0,
            noise_linear_velocity: 0.0,
            noise_angular_velocity: 0.0,
            noise_joint_angles: 0.0,
            noise_joint_velocity: 0.0,
            contact_dropout: 0.0,
        }
    }

    /// Randomization used while training experts.
    pub fn expert() -> Self {
        Self {
            action_noise: 0.02,
            mass_scale: Range::new(0.75, 1.25),
            kp: Range::new(35.0, 65.0),
            kd: Range::new(1.0, 1.4),
            friction: Range::new(0.1, 1.5),
            noise_orientation: 0.05,
            noise_linear_velocity: 0.25,
            noise_angular_velocity: 0.3,
            noise_joint_angles: 0.02,
            noise_joint_velocity: 0.0,
            contact_dropout: 0.2,
        }
    }

    /// Randomization used while training the composer.
    pub fn composer() -> Self {
        Self {
            action_noise: 0.02,
            mass_scale: Range::new(0.95, 1.05),
            kp: Range::new(45.0, 55.0),
            kd: Range::new(0.9, 1.2),
            friction: Range::new(0.1, 1.5),
            noise_orientation: 0.06,
            noise_linear_velocity: 0.25,
            noise_angular_velocity: 0.3,
            noise_joint_angles: 0.02,
            noise_joint_velocity: 1.5,
            contact_dropout: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, r) in [
            ("mass_scale", self.mass_scale),
            ("kp", self.kp),
            ("kd", self.kd),
            ("friction", self.friction),
        ] {
            if !(r.min <= r.max) {
                return Err(ConfigError::Invalid(format!("{name}: min {} exceeds max {}", r.min, r.max)));
            }
        }
        if self.mass_scale.min <= 0.0 || self.kp.min <= 0.0 || self.kd.min < 0.0 || self.friction.min < 0.0 {
            return Err(ConfigError::Invalid("mass scale and kp must be positive; kd and friction non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.contact_dropout) {
            return Err(ConfigError::Invalid(format!(
                "contact_dropout must lie in [0, 1], got {}",
                self.contact_dropout
            )));
        }
        let amps = [
            self.action_noise,
            self.noise_orientation,
            self.noise_linear_velocity,
            self.noise_angular_velocity,
            self.noise_joint_angles,
            self.noise_joint_velocity,
        ];
        if amps.iter().any(|a| !(*a >= 0.0)) {
            return Err(ConfigError::Invalid("noise amplitudes must be non-negative".into()));
        }
        Ok(())
    }

    /// Draws the physical parameters held fixed for one episode.
    pub fn sample_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> EpisodeParams {
        let mut mass_scale = [1.0; NUM_BODIES];
        for m in mass_scale.iter_mut() {
            *m = self.mass_scale.sample(rng);
        }
        EpisodeParams {
            mass_scale,
            kp: self.kp.sample(rng),
            kd: self.kd.sample(rng),
            friction: self.friction.sample(rng),
        }
    }

    /// Adds per-step uniform action noise.
    pub fn perturb_action<R: Rng + ?Sized>(&self, cmd: &ActionCommand, rng: &mut R) -> ActionCommand {
        let mut out = *cmd;
        if self.action_noise > 0.0 {
            for v in out.joint_targets.iter_mut() {
                *v += uniform(rng, self.action_noise);
            }
        }
        out
    }
}

/// Torso, then thigh and calf of each leg.
pub const NUM_BODIES: usize = 9;

/// Physical parameters drawn once per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeParams {
    pub mass_scale: [f64; NUM_BODIES],
    pub kp: f64,
    pub kd: f64,
    pub friction: f64,
}

impl EpisodeParams {
    pub fn nominal(model: &RobotModel, contact: &ContactParams) -> Self {
        Self {
            mass_scale: [1.0; NUM_BODIES],
            kp: model.kp,
            kd: model.kd,
            friction: contact.friction,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, amp: f64) -> f64 {
    if amp > 0.0 {
        rng.random_range(-amp..=amp)
    } else {
        0.0
    }
}

/// Noisy sensor reading of `state`. Forward position and height are passed
/// through unchanged.
pub fn observe<R: Rng + ?Sized>(state: &AgentState, rand: &RandomizationConfig, rng: &mut R) -> AgentState {
    let mut o = *state;
    o.pitch = super::state::wrap_angle(o.pitch + uniform(rng, rand.noise_orientation));
    o.vx += uniform(rng, rand.noise_linear_velocity);
    o.vz += uniform(rng, rand.noise_linear_velocity);
    o.pitch_rate += uniform(rng, rand.noise_angular_velocity);
    for q in o.joint_pos.iter_mut() {
        *q += uniform(rng, rand.noise_joint_angles);
    }
    for v in o.joint_vel.iter_mut() {
        *v += uniform(rng, rand.noise_joint_velocity);
    }
    if rand.contact_dropout > 0.0 {
        for c in o.contacts.iter_mut() {
            if rng.random_bool(rand.contact_dropout) {
                *c = false;
            }
        }
    }
    o
}
