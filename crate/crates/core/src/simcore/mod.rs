//! Deterministic sagittal-plane simulator for an eight-joint quadruped.

pub mod dynamics;
pub mod model;
pub mod randomization;
pub mod state;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
pub use dynamics::{BodyParams, StepInfo};
pub use model::{ContactParams, JointRange, LegGeometry, RobotModel, SimClock};
pub use randomization::{observe, EpisodeParams, RandomizationConfig, Range};
pub use state::{
    angle_diff, wrap_angle, ActionCommand, AgentState, TargetState, NUM_DOF, NUM_JOINTS, NUM_LEGS, STATE_FEATURES,
    TARGET_FEATURES,
};

pub const SIM_CONFIG_SCHEMA_VERSION: u32 = 1;

/// Randomization used for the two kinds of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationProfiles {
    pub expert: RandomizationConfig,
    pub composer: RandomizationConfig,
}

impl Default for RandomizationProfiles {
    fn default() -> Self {
        Self {
            expert: RandomizationConfig::expert(),
            composer: RandomizationConfig::composer(),
        }
    }
}

/// Everything needed to build a [`Simulator`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub schema_version: u32,
    pub gravity: f64,
    pub clock: SimClock,
    pub model: RobotModel,
    pub contact: ContactParams,
    pub randomization: RandomizationProfiles,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            schema_version: SIM_CONFIG_SCHEMA_VERSION,
            gravity: 9.81,
            clock: SimClock::default(),
            model: RobotModel::default(),
            contact: ContactParams::default(),
            randomization: RandomizationProfiles::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SIM_CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                expected: SIM_CONFIG_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        if !self.gravity.is_finite() || self.gravity < 0.0 {
            return Err(ConfigError::Invalid(format!("gravity must be >= 0, got {}", self.gravity)));
        }
        self.clock.validate()?;
        self.model.validate()?;
        self.randomization.expert.validate()?;
        self.randomization.composer.validate()?;
        let c = &self.contact;
        if !(c.stiffness > 0.0) || c.damping < 0.0 || c.tangential_damping < 0.0 || c.friction < 0.0 {
            return Err(ConfigError::Invalid("contact parameters out of range".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("sim config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| ConfigError::io(path, e))
    }

    pub fn control_dt(&self) -> f64 {
        self.clock.control_dt()
    }
}

/// Advances `state` by one control step (`clock.decimation` physics steps).
///
/// Targets are clamped to the joint limits; the torque on each joint is
/// `kp (target - q) - kd qdot` clamped to the torque limit. `clock` is
/// advanced in place.
pub fn step(
    state: &AgentState,
    cmd: &ActionCommand,
    model: &RobotModel,
    contact: &ContactParams,
    gravity: f64,
    params: &EpisodeParams,
    clock: &mut SimClock,
) -> Result<(AgentState, StepInfo), SimError> {
    let body = BodyParams::new(model, &params.mass_scale);
    step_with_body(state, cmd, model, contact, gravity, params, &body, clock)
}

#[allow(clippy::too_many_arguments)]
fn step_with_body(
    state: &AgentState,
    cmd: &ActionCommand,
    model: &RobotModel,
    contact: &ContactParams,
    gravity: f64,
    params: &EpisodeParams,
    body: &BodyParams,
    clock: &mut SimClock,
) -> Result<(AgentState, StepInfo), SimError> {
    if !cmd.is_finite() {
        return Err(SimError::NonFiniteAction);
    }
    let targets = model.clamp_targets(&cmd.joint_targets);
    let ctx = dynamics::StepContext {
        model,
        contact,
        body,
        params,
        gravity,
        dt: clock.dt,
    };
    let mut q = state.positions();
    let mut v = state.velocities();
    let mut info = StepInfo::default();
    let n = clock.decimation.max(1);
    for _ in 0..n {
        let (torques, pen) = dynamics::physics_step(&ctx, &mut q, &mut v, &targets);
        clock.elapsed_steps += 1;
        if !(q.iter().chain(v.iter()).all(|x| x.is_finite())) {
            return Err(SimError::Divergence {
                step: clock.elapsed_steps,
            });
        }
        for j in 0..NUM_JOINTS {
            info.mean_sq_torques[j] += torques[j] * torques[j] / n as f64;
        }
        info.torques = torques;
        info.max_penetration = info.max_penetration.max(pen);
    }
    Ok((dynamics::state_from(model, &q, &v), info))
}

/// True iff any link other than the feet touches the ground: a torso corner
/// at or below the ground plane, or a knee within its collision radius of it.
/// Hips sit on the torso's mid-line and are covered by the corner test.
pub fn detect_failure(state: &AgentState, model: &RobotModel) -> bool {
    let pts = dynamics::collision_points(model, &state.positions());
    if pts.torso_corners.iter().any(|c| c[1] <= 0.0) {
        return true;
    }
    pts.knees.iter().any(|k| k[1] <= model.knee_radius)
}

/// A simulator instance that owns its state, clock and episode parameters.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    params: EpisodeParams,
    body: BodyParams,
    clock: SimClock,
    state: AgentState,
    last_info: StepInfo,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Self {
        let params = EpisodeParams::nominal(&config.model, &config.contact);
        let body = BodyParams::new(&config.model, &params.mass_scale);
        let clock = config.clock;
        Self {
            config,
            params,
            body,
            clock,
            state: AgentState::default(),
            last_info: StepInfo::default(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn model(&self) -> &RobotModel {
        &self.config.model
    }

    pub fn params(&self) -> &EpisodeParams {
        &self.params
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn last_info(&self) -> &StepInfo {
        &self.last_info
    }

    /// Starts a new episode at `state` with the given physical parameters.
    /// Contact flags are recomputed from the geometry.
    pub fn reset(&mut self, state: AgentState, params: EpisodeParams) {
        self.params = params;
        self.body = BodyParams::new(&self.config.model, &params.mass_scale);
        self.clock.elapsed_steps = 0;
        self.state = dynamics::state_from(&self.config.model, &state.positions(), &state.velocities());
        self.last_info = StepInfo::default();
    }

    /// Overwrites the state without touching the clock or parameters.
    pub fn set_state(&mut self, state: AgentState) {
        self.state = dynamics::state_from(&self.config.model, &state.positions(), &state.velocities());
    }

    pub fn step(&mut self, cmd: &ActionCommand) -> Result<&AgentState, SimError> {
        let (next, info) = step_with_body(
            &self.state,
            cmd,
            &self.config.model,
            &self.config.contact,
            self.config.gravity,
            &self.params,
            &self.body,
            &mut self.clock,
        )?;
        self.state = next;
        self.last_info = info;
        Ok(&self.state)
    }

    pub fn failed(&self) -> bool {
        detect_failure(&self.state, &self.config.model)
    }

    pub fn linear_momentum(&self) -> [f64; 2] {
        dynamics::linear_momentum(&self.config.model, &self.body, &self.state.positions(), &self.state.velocities())
    }

    pub fn sim_time(&self) -> f64 {
        self.clock.sim_time()
    }
}

/// Nominal standing pose with the feet resting on the ground.
pub fn standing_state(model: &RobotModel, hip_height: f64) -> AgentState {
    let mut s = AgentState::default();
    for leg in 0..NUM_LEGS {
        let (h, k) = model
            .leg_ik(leg, 0.0, -hip_height)
            .expect("standing height within leg reach");
        s.joint_pos[2 * leg] = h;
        s.joint_pos[2 * leg + 1] = k;
    }
    s.z = hip_height + model.foot_radius;
    s.contacts = [true; NUM_LEGS];
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_config() -> SimConfig {
        let mut c = SimConfig::default();
        c.gravity = 0.0;
        c
    }

    #[test]
    fn zero_gravity_rest_is_equilibrium() {
        let cfg = free_config();
        let mut sim = Simulator::new(cfg.clone());
        let mut s = standing_state(&cfg.model, 0.28);
        s.z = 1.0;
        sim.reset(s, EpisodeParams::nominal(&cfg.model, &cfg.contact));
        let start = *sim.state();
        let cmd = ActionCommand::new(start.joint_pos);
        for _ in 0..10 {
            sim.step(&cmd).unwrap();
        }
        assert_eq!(sim.state(), &start);
        assert_eq!(sim.clock().elapsed_steps, 80);
    }

    #[test]
    fn failure_detection_cases() {
        let model = RobotModel::default();
        let s = standing_state(&model, 0.28);
        assert!(s.contacts.iter().all(|c| *c));
        assert!(!detect_failure(&s, &model));
        let mut low = s;
        low.z = model.torso_half_height * 0.5;
        assert!(detect_failure(&low, &model));
        let mut kneel = s;
        kneel.joint_pos[1] = 2.7;
        kneel.joint_pos[0] = 0.3;
        kneel.z = 0.12;
        assert!(detect_failure(&kneel, &model));
    }

    #[test]
    fn config_roundtrip_and_schema() {
        let cfg = SimConfig::default();
        let text = cfg.to_toml_string();
        let back = SimConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        let bad = text.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(SimConfig::from_toml_str(&bad), Err(ConfigError::SchemaVersion { .. })));
        let missing = text.replace("schema_version = 1\n", "");
        assert!(SimConfig::from_toml_str(&missing).is_err());
    }

    #[test]
    fn non_finite_action_rejected() {
        let cfg = SimConfig::default();
        let mut sim = Simulator::new(cfg.clone());
        sim.reset(standing_state(&cfg.model, 0.28), EpisodeParams::nominal(&cfg.model, &cfg.contact));
        let mut cmd = ActionCommand::new(sim.state().joint_pos);
        cmd.joint_targets[3] = f64::NAN;
        assert!(matches!(sim.step(&cmd), Err(SimError::NonFiniteAction)));
    }
}
