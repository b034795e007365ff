//! The composer policy: one network that drives the agent from any start
//! state to a target state sampled from another skill, trained against a
//! tolerance band that shrinks around the straight line between the two.

mod train;

pub use train::{
    check_success_floor, evaluate_composer, run_transition, train_composer, train_composer_unchecked, untrained_composer, ComposerCurveRow, ComposerEnv, ComposerEval, ComposerSkill, TrainedComposer,
    TransitionResult,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::approx::{Checkpoint, PpoConfig};
use crate::error::ConfigError;
use crate::experts::ArtifactError;
use crate::simcore::{
    angle_diff, wrap_angle, ActionCommand, AgentState, RandomizationConfig, RobotModel, TargetState, NUM_JOINTS,
    STATE_FEATURES, TARGET_FEATURES,
};

pub const SCHEDULE_SCHEMA_VERSION: u32 = 1;
pub const COMPOSER_SCHEMA_VERSION: u32 = 1;
/// States and actions kept in the observation history.
pub const HISTORY: usize = 3;
/// Length of the composer observation.
pub const COMPOSER_OBS_DIM: usize = HISTORY * STATE_FEATURES + HISTORY * NUM_JOINTS + 2 * TARGET_FEATURES + 1;

/// The five groups that share one tolerance each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceGroup {
    ComHeight,
    Orientation,
    LinearVelocity,
    AngularVelocity,
    JointAngles,
}

impl ToleranceGroup {
    pub const ALL: [ToleranceGroup; 5] = [
        ToleranceGroup::ComHeight,
        ToleranceGroup::Orientation,
        ToleranceGroup::LinearVelocity,
        ToleranceGroup::AngularVelocity,
        ToleranceGroup::JointAngles,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Start and end tolerance and annealing exponent of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupTolerance {
    pub group: ToleranceGroup,
    pub exponent: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
}

/// Tolerance bands, transition horizon and torque weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSchedule {
    pub schema_version: u32,
    /// Transition horizon T (s).
    pub horizon: f64,
    pub torque_weight: f64,
    pub groups: Vec<GroupTolerance>,
}

impl Default for ToleranceSchedule {
    fn default() -> Self {
        let g = |group, exponent, sigma_start, sigma_end| GroupTolerance {
            group,
            exponent,
            sigma_start,
            sigma_end,
        };
        Self {
            schema_version: SCHEDULE_SCHEMA_VERSION,
            horizon: 2.0,
            torque_weight: 0.0001,
            groups: vec![
                g(ToleranceGroup::ComHeight, 2.0, 0.35, 0.02),
                g(ToleranceGroup::Orientation, 4.0, 1.0, 0.2),
                g(ToleranceGroup::LinearVelocity, 8.0, 2.5, 0.2),
                g(ToleranceGroup::AngularVelocity, 8.0, 15.0, 0.2),
                g(ToleranceGroup::JointAngles, 2.0, 3.14, 0.5),
            ],
        }
    }
}

impl ToleranceSchedule {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEDULE_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                expected: SCHEDULE_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        if !(self.horizon > 0.0) {
            return Err(ConfigError::Invalid("horizon must be positive".into()));
        }
        if !(self.torque_weight >= 0.0) {
            return Err(ConfigError::Invalid("torque weight must be non-negative".into()));
        }
        for group in ToleranceGroup::ALL {
            let n = self.groups.iter().filter(|g| g.group == group).count();
            if n != 1 {
                return Err(ConfigError::Invalid(format!("group {group:?} must appear exactly once, found {n}")));
            }
        }
        for g in &self.groups {
            if !(g.sigma_end > 0.0) || !(g.sigma_start >= g.sigma_end) {
                return Err(ConfigError::Invalid(format!("{:?}: need sigma_start >= sigma_end > 0", g.group)));
            }
            if !(g.exponent >= 1.0) {
                return Err(ConfigError::Invalid(format!("{:?}: exponent must be >= 1", g.group)));
            }
        }
        Ok(())
    }

    pub fn group(&self, group: ToleranceGroup) -> &GroupTolerance {
        self.groups.iter().find(|g| g.group == group).expect("validated schedule has every group")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let s: Self = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| ConfigError::io(path, e))
    }

    /// `sigma_t` for every group, indexed by [`ToleranceGroup::index`].
    pub fn tolerances(&self, t: f64) -> [f64; 5] {
        ToleranceGroup::ALL.map(|g| anneal_tolerance(g, t, self))
    }

    pub fn end_tolerances(&self) -> [f64; 5] {
        ToleranceGroup::ALL.map(|g| self.group(g).sigma_end)
    }
}

/// `sigma_t = sigma_s + t^p (sigma_e - sigma_s)`.
pub fn anneal_tolerance(group: ToleranceGroup, t: f64, sched: &ToleranceSchedule) -> f64 {
    let g = sched.group(group);
    // same value, written so both endpoints come out exact
    let w = t.powf(g.exponent);
    (1.0 - w) * g.sigma_start + w * g.sigma_end
}

/// Point on the straight line from `s0` to `target`; pitch follows the
/// shorter arc.
pub fn interpolate_center(s0: &TargetState, target: &TargetState, t: f64) -> TargetState {
    let lerp = |a: f64, b: f64| a + t * (b - a);
    let mut c = TargetState {
        z: lerp(s0.z, target.z),
        pitch: wrap_angle(s0.pitch + t * angle_diff(target.pitch, s0.pitch)),
        vx: lerp(s0.vx, target.vx),
        vz: lerp(s0.vz, target.vz),
        pitch_rate: lerp(s0.pitch_rate, target.pitch_rate),
        joint_pos: [0.0; NUM_JOINTS],
        joint_vel: [0.0; NUM_JOINTS],
    };
    for j in 0..NUM_JOINTS {
        c.joint_pos[j] = lerp(s0.joint_pos[j], target.joint_pos[j]);
        c.joint_vel[j] = lerp(s0.joint_vel[j], target.joint_vel[j]);
    }
    c
}

/// Largest absolute deviation within each group. Joint velocities are not
/// part of any group.
pub fn group_deviations(s: &TargetState, reference: &TargetState) -> [f64; 5] {
    let joints = (0..NUM_JOINTS)
        .map(|j| (s.joint_pos[j] - reference.joint_pos[j]).abs())
        .fold(0.0, f64::max);
    [
        (s.z - reference.z).abs(),
        angle_diff(s.pitch, reference.pitch).abs(),
        (s.vx - reference.vx).abs().max((s.vz - reference.vz).abs()),
        (s.pitch_rate - reference.pitch_rate).abs(),
        joints,
    ]
}

pub const BETA_SUCCESS: f64 = 100.0;
pub const BETA_VIOLATION: f64 = -1.0;
pub const BETA_INSIDE: f64 = 1.0;

/// Start state, target and progress of one transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionContext {
    pub s0: TargetState,
    pub target: TargetState,
    /// Normalized time in `[0, 1]`.
    pub t: f64,
}

impl TransitionContext {
    pub fn center(&self) -> TargetState {
        interpolate_center(&self.s0, &self.target, self.t)
    }
}

/// 100 when every group is within its end tolerance of the target (checked
/// first), -1 when any group is at or beyond its current tolerance around the
/// centre line, 1 otherwise.
pub fn boundary_indicator(s: &AgentState, ctx: &TransitionContext, sched: &ToleranceSchedule) -> f64 {
    let st = TargetState::from(*s);
    let to_target = group_deviations(&st, &ctx.target);
    let end = sched.end_tolerances();
    if to_target.iter().zip(&end).all(|(d, e)| d - e <= 0.0) {
        return BETA_SUCCESS;
    }
    let to_center = group_deviations(&st, &ctx.center());
    let now = sched.tolerances(ctx.t);
    if to_center.iter().zip(&now).any(|(d, s)| d - s >= 0.0) {
        return BETA_VIOLATION;
    }
    BETA_INSIDE
}

/// `R = beta - w_tau * sum tau_j^2`.
pub fn composer_reward(beta: f64, torques: &[f64; NUM_JOINTS], torque_weight: f64) -> f64 {
    beta - torque_weight * torques.iter().map(|t| t * t).sum::<f64>()
}

/// Outcome of a transition attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionOutcome {
    Reached,
    Violated,
    Timeout,
}

/// Settings that shape composer training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposerConfig {
    pub schema_version: u32,
    pub ppo: PpoConfig,
    pub hidden: Vec<usize>,
    /// Scale of the network output added to the centre-line joint angles (rad).
    pub action_scale: f64,
    pub num_envs: usize,
    pub steps_per_env: usize,
    pub iterations: usize,
    /// Uniform perturbation of initial joint angles (rad) and velocities (rad/s).
    pub init_joint_noise: f64,
    pub init_joint_vel_noise: f64,
    /// Probability of starting from a few control steps of the source expert
    /// instead of the raw clip frame, when experts are available.
    pub expert_warmup_prob: f64,
    pub max_warmup_steps: usize,
    /// Required success rate on training pairs at the end of training.
    pub success_floor: f64,
    pub eval_episodes: usize,
}

impl Default for ComposerConfig {
    fn default() -> Self {
        Self {
            schema_version: COMPOSER_SCHEMA_VERSION,
            ppo: PpoConfig {
                entropy_coef: 0.002,
                ..PpoConfig::default()
            },
            hidden: crate::approx::HIDDEN.to_vec(),
            action_scale: 0.5,
            num_envs: 32,
            steps_per_env: 128,
            iterations: 3000,
            init_joint_noise: 0.05,
            init_joint_vel_noise: 0.5,
            expert_warmup_prob: 0.5,
            max_warmup_steps: 30,
            success_floor: 0.9,
            eval_episodes: 300,
        }
    }
}

impl ComposerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != COMPOSER_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                expected: COMPOSER_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        if self.num_envs == 0 || self.steps_per_env == 0 || self.iterations == 0 || self.eval_episodes == 0 {
            return Err(ConfigError::Invalid("counts must be positive".into()));
        }
        if !(self.action_scale > 0.0) {
            return Err(ConfigError::Invalid("action scale must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.expert_warmup_prob) || !(0.0..=1.0).contains(&self.success_floor) {
            return Err(ConfigError::Invalid("probabilities must be in [0, 1]".into()));
        }
        if !(self.ppo.clip > 0.0 && self.ppo.clip < 1.0) {
            return Err(ConfigError::Invalid("clip ratio must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Observation history and bookkeeping for one transition in progress.
#[derive(Debug, Clone)]
pub struct TransitionDriver {
    pub ctx: TransitionContext,
    pub step: usize,
    pub horizon_steps: usize,
    states: Vec<[f64; STATE_FEATURES]>,
    actions: Vec<[f64; NUM_JOINTS]>,
    action_scale: f64,
}

impl TransitionDriver {
    pub fn new(s0: &AgentState, target: TargetState, horizon: f64, control_dt: f64, action_scale: f64) -> Self {
        Self {
            ctx: TransitionContext {
                s0: TargetState::from(*s0),
                target,
                t: 0.0,
            },
            step: 0,
            horizon_steps: ((horizon / control_dt).round() as usize).max(1),
            states: Vec::with_capacity(HISTORY),
            actions: Vec::with_capacity(HISTORY),
            action_scale,
        }
    }

    fn push<T: Copy>(buf: &mut Vec<T>, v: T) {
        if buf.len() == HISTORY {
            buf.remove(0);
        }
        buf.push(v);
    }

    /// Records an observed state and builds the observation: newest-first
    /// state and action histories (zero-padded), target, current centre and
    /// normalized time.
    pub fn observe(&mut self, observed: &AgentState) -> Vec<f64> {
        Self::push(&mut self.states, observed.features());
        let mut o = Vec::with_capacity(COMPOSER_OBS_DIM);
        for k in 0..HISTORY {
            match self.states.len().checked_sub(k + 1) {
                Some(i) => o.extend_from_slice(&self.states[i]),
                None => o.extend_from_slice(&[0.0; STATE_FEATURES]),
            }
        }
        for k in 0..HISTORY {
            match self.actions.len().checked_sub(k + 1) {
                Some(i) => o.extend_from_slice(&self.actions[i]),
                None => o.extend_from_slice(&[0.0; NUM_JOINTS]),
            }
        }
        o.extend_from_slice(&self.ctx.target.to_array());
        o.extend_from_slice(&self.ctx.center().to_array());
        o.push(self.ctx.t);
        o
    }

    /// PD targets: network output around the joint angles of the next centre point.
    pub fn command(&mut self, output: &[f64], model: &RobotModel) -> ActionCommand {
        let t_next = ((self.step + 1) as f64 / self.horizon_steps as f64).min(1.0);
        let center = interpolate_center(&self.ctx.s0, &self.ctx.target, t_next);
        let mut targets = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            targets[j] = center.joint_pos[j] + self.action_scale * output[j];
        }
        let targets = model.clamp_targets(&targets);
        Self::push(&mut self.actions, targets);
        ActionCommand::new(targets)
    }

    /// Advances time after a simulator step and classifies the new state.
    pub fn assess(&mut self, state: &AgentState, sched: &ToleranceSchedule) -> (f64, Option<TransitionOutcome>) {
        self.step += 1;
        self.ctx.t = (self.step as f64 / self.horizon_steps as f64).min(1.0);
        let beta = boundary_indicator(state, &self.ctx, sched);
        let outcome = if beta == BETA_SUCCESS {
            Some(TransitionOutcome::Reached)
        } else if beta == BETA_VIOLATION {
            Some(TransitionOutcome::Violated)
        } else if self.step >= self.horizon_steps {
            Some(TransitionOutcome::Timeout)
        } else {
            None
        };
        (beta, outcome)
    }

    /// [`Self::assess`] plus the step reward.
    pub fn advance(
        &mut self,
        state: &AgentState,
        rms_torques: &[f64; NUM_JOINTS],
        sched: &ToleranceSchedule,
    ) -> (f64, f64, Option<TransitionOutcome>) {
        let (beta, outcome) = self.assess(state, sched);
        (beta, composer_reward(beta, rms_torques, sched.torque_weight), outcome)
    }

    pub fn elapsed(&self, control_dt: f64) -> f64 {
        self.step as f64 * control_dt
    }
}

/// Root-mean-square joint torques over the sub-steps of the last control step.
pub fn rms_torques(info: &crate::simcore::StepInfo) -> [f64; NUM_JOINTS] {
    info.mean_sq_torques.map(f64::sqrt)
}

/// Adds composer-column observation noise to a sampled target.
pub fn perturb_target<R: rand::Rng + ?Sized>(target: &TargetState, rand: &RandomizationConfig, rng: &mut R) -> TargetState {
    let mut s = AgentState::default();
    s.z = target.z;
    s.pitch = target.pitch;
    s.vx = target.vx;
    s.vz = target.vz;
    s.pitch_rate = target.pitch_rate;
    s.joint_pos = target.joint_pos;
    s.joint_vel = target.joint_vel;
    let no_dropout = RandomizationConfig {
        contact_dropout: 0.0,
        ..*rand
    };
    TargetState::from(crate::simcore::observe(&s, &no_dropout, rng))
}

/// Provenance stored with a trained composer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposerMeta {
    pub kind: String,
    pub schema_version: u32,
    pub training_skills: Vec<String>,
    pub seed: u64,
    pub iterations: usize,
    pub obs_dim: usize,
    pub action_scale: f64,
    pub final_success_rate: f64,
    pub schedule: ToleranceSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposerArtifact {
    pub meta: ComposerMeta,
    pub checkpoint: Checkpoint,
}

impl ComposerArtifact {
    pub fn new(meta: ComposerMeta, mut checkpoint: Checkpoint) -> Self {
        checkpoint.metadata = toml::to_string(&meta).expect("metadata serializes");
        checkpoint.norm.frozen = true;
        Self { meta, checkpoint }
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self, ArtifactError> {
        let meta: ComposerMeta = toml::from_str(&checkpoint.metadata).map_err(|e| ArtifactError::Meta(e.to_string()))?;
        if meta.kind != "composer" {
            return Err(ArtifactError::Meta(format!("expected a composer artifact, found {}", meta.kind)));
        }
        if meta.schema_version != COMPOSER_SCHEMA_VERSION {
            return Err(ArtifactError::Meta(format!("unsupported schema version {}", meta.schema_version)));
        }
        meta.schedule.validate().map_err(|e| ArtifactError::Meta(e.to_string()))?;
        if checkpoint.policy.obs_dim() != COMPOSER_OBS_DIM {
            return Err(ArtifactError::Dimension {
                expected: COMPOSER_OBS_DIM,
                found: checkpoint.policy.obs_dim(),
            });
        }
        if checkpoint.policy.act_dim() != NUM_JOINTS {
            return Err(ArtifactError::Dimension {
                expected: NUM_JOINTS,
                found: checkpoint.policy.act_dim(),
            });
        }
        Ok(Self { meta, checkpoint })
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        Ok(self.checkpoint.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }

    pub fn schedule(&self) -> &ToleranceSchedule {
        &self.meta.schedule
    }

    pub fn driver(&self, s0: &AgentState, target: TargetState, control_dt: f64) -> TransitionDriver {
        TransitionDriver::new(s0, target, self.meta.schedule.horizon, control_dt, self.meta.action_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> ToleranceSchedule {
        ToleranceSchedule::default()
    }

    fn target() -> TargetState {
        TargetState {
            z: 0.3,
            pitch: 0.0,
            vx: 0.4,
            vz: 0.0,
            pitch_rate: 0.0,
            joint_pos: [-0.6, 1.4, -0.5, 1.3, -0.7, 1.5, -0.6, 1.2],
            joint_vel: [0.5; NUM_JOINTS],
        }
    }

    fn as_agent(t: &TargetState) -> AgentState {
        AgentState {
            x: 1.0,
            z: t.z,
            pitch: t.pitch,
            vx: t.vx,
            vz: t.vz,
            pitch_rate: t.pitch_rate,
            joint_pos: t.joint_pos,
            joint_vel: t.joint_vel,
            contacts: [true; 4],
        }
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = sched();
        for g in ToleranceGroup::ALL {
            let row = s.group(g);
            assert_eq!(anneal_tolerance(g, 0.0, &s), row.sigma_start);
            assert_eq!(anneal_tolerance(g, 1.0, &s), row.sigma_end);
        }
        assert!((anneal_tolerance(ToleranceGroup::ComHeight, 0.5, &s) - 0.2675).abs() < 1e-12);
    }

    #[test]
    fn schedule_file_round_trip() {
        let s = sched();
        assert_eq!(ToleranceSchedule::from_toml_str(&s.to_toml_string()).unwrap(), s);
        let mut bad = s.clone();
        bad.groups[0].sigma_end = 1.0;
        assert!(bad.validate().is_err());
        let mut missing = s.clone();
        missing.groups.pop();
        assert!(missing.validate().is_err());
    }

    #[test]
    fn center_endpoints_and_short_arc() {
        let mut a = target();
        let mut b = target();
        b.z = 0.2;
        b.joint_pos[3] = 0.0;
        assert_eq!(interpolate_center(&a, &b, 0.0), a);
        let c1 = interpolate_center(&a, &b, 1.0);
        assert!((c1.z - b.z).abs() < 1e-15 && c1.joint_pos == b.joint_pos);
        a.pitch = 3.0;
        b.pitch = -3.0;
        let mid = interpolate_center(&a, &b, 0.5);
        assert!((mid.pitch.abs() - std::f64::consts::PI).abs() < 1e-12, "{}", mid.pitch);
    }

    #[test]
    fn indicator_branches() {
        let s = sched();
        let tg = target();
        let mut s0 = tg;
        s0.vx = -0.4;
        s0.z = 0.25;
        let ctx = TransitionContext { s0, target: tg, t: 0.3 };
        assert_eq!(boundary_indicator(&as_agent(&tg), &ctx, &s), BETA_SUCCESS);
        let mut inside = as_agent(&interpolate_center(&s0, &tg, 0.3));
        assert_eq!(boundary_indicator(&inside, &ctx, &s), BETA_INSIDE);
        inside.pitch_rate = 100.0;
        assert_eq!(boundary_indicator(&inside, &ctx, &s), BETA_VIOLATION);
    }

    #[test]
    fn success_wins_over_violation() {
        // far from the centre line yet within the end tolerance of the target
        let s = sched();
        let tg = target();
        let mut s0 = tg;
        s0.z = 2.0;
        let ctx = TransitionContext { s0, target: tg, t: 0.0 };
        let agent = as_agent(&tg);
        let to_center = group_deviations(&TargetState::from(agent), &ctx.center());
        assert!(to_center[0] >= s.tolerances(0.0)[0]);
        assert_eq!(boundary_indicator(&agent, &ctx, &s), BETA_SUCCESS);
    }

    #[test]
    fn reward_arithmetic() {
        assert_eq!(composer_reward(1.0, &[0.0; 8], 0.0001), 1.0);
        assert!((composer_reward(1.0, &[10.0; 8], 0.0001) - 0.92).abs() < 1e-12);
        assert!((composer_reward(100.0, &[5.0; 8], 0.0001) - 99.98).abs() < 1e-12);
        assert!((composer_reward(-1.0, &[1.0; 8], 0.0001) - (-1.0008)).abs() < 1e-12);
    }

    #[test]
    fn observation_layout_and_padding() {
        let tg = target();
        let s0 = as_agent(&tg);
        let mut d = TransitionDriver::new(&s0, tg, 2.0, 1.0 / 30.0, 0.5);
        let o = d.observe(&s0);
        assert_eq!(o.len(), COMPOSER_OBS_DIM);
        assert_eq!(COMPOSER_OBS_DIM, 142);
        assert!(o[STATE_FEATURES..3 * STATE_FEATURES + 3 * NUM_JOINTS].iter().all(|v| *v == 0.0));
        assert_eq!(*o.last().unwrap(), 0.0);
        let model = RobotModel::default();
        let cmd = d.command(&[0.0; 8], &model);
        let c = interpolate_center(&d.ctx.s0, &d.ctx.target, 1.0 / 60.0);
        assert_eq!(cmd.joint_targets, model.clamp_targets(&c.joint_pos));
        let (beta, _, outcome) = d.advance(&s0, &[0.0; 8], &sched());
        assert_eq!(beta, BETA_SUCCESS);
        assert_eq!(outcome, Some(TransitionOutcome::Reached));
        assert_eq!(d.step, 1);
    }
}
