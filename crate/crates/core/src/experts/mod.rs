//! Single-skill motion-imitation experts.

mod train;

pub use train::{evaluate_expert, train_expert, untrained_expert, ExpertEnv, ExpertEval, LearningCurveRow, TrainedExpert};
pub(crate) use train::initial_state;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approx::{Checkpoint, PpoConfig};
use crate::clips::{MotionClip, Phase};
use crate::error::ConfigError;
use crate::simcore::dynamics::collision_points;
use crate::simcore::{angle_diff, ActionCommand, AgentState, RobotModel, TargetState, NUM_JOINTS, NUM_LEGS, STATE_FEATURES, TARGET_FEATURES};

/// Reference look-ahead in control steps.
pub const FUTURE_OFFSETS: [usize; 4] = [1, 2, 10, 30];
/// Length of [`imitation_observation`].
pub const EXPERT_OBS_DIM: usize = STATE_FEATURES + FUTURE_OFFSETS.len() * TARGET_FEATURES + 1;
pub const EXPERT_SCHEMA_VERSION: u32 = 1;

/// Weights `w_k` and exponential scales `alpha_k` of the imitation terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImitationRewardWeights {
    pub pose: f64,
    pub pose_scale: f64,
    pub velocity: f64,
    pub velocity_scale: f64,
    pub end_effector: f64,
    pub end_effector_scale: f64,
    pub root: f64,
    pub root_scale: f64,
}

impl Default for ImitationRewardWeights {
    fn default() -> Self {
        Self {
            pose: 0.5,
            pose_scale: 2.0,
            velocity: 0.1,
            velocity_scale: 0.1,
            end_effector: 0.2,
            end_effector_scale: 40.0,
            root: 0.2,
            root_scale: 5.0,
        }
    }
}

impl ImitationRewardWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = [self.pose, self.velocity, self.end_effector, self.root];
        let s = [self.pose_scale, self.velocity_scale, self.end_effector_scale, self.root_scale];
        if w.iter().chain(&s).any(|v| !(*v >= 0.0)) {
            return Err(ConfigError::Invalid("reward weights and scales must be non-negative".into()));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid("reward weights must sum to 1".into()));
        }
        Ok(())
    }
}

/// Squared tracking errors of the four imitation terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImitationErrors {
    pub pose: f64,
    pub velocity: f64,
    pub end_effector: f64,
    pub root: f64,
}

/// Foot positions relative to the torso centre, in world axes.
pub fn feet_relative(model: &RobotModel, s: &AgentState) -> [[f64; 2]; NUM_LEGS] {
    let feet = collision_points(model, &s.positions()).feet;
    feet.map(|f| [f[0] - s.x, f[1] - s.z])
}

pub fn imitation_errors(model: &RobotModel, state: &AgentState, reference: &AgentState) -> ImitationErrors {
    let mut pose = 0.0;
    let mut velocity = 0.0;
    for j in 0..NUM_JOINTS {
        pose += (state.joint_pos[j] - reference.joint_pos[j]).powi(2);
        velocity += (state.joint_vel[j] - reference.joint_vel[j]).powi(2);
    }
    let fa = feet_relative(model, state);
    let fb = feet_relative(model, reference);
    let end_effector = fa
        .iter()
        .zip(&fb)
        .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
        .sum();
    let root = (state.z - reference.z).powi(2)
        + angle_diff(state.pitch, reference.pitch).powi(2)
        + 0.1 * ((state.vx - reference.vx).powi(2) + (state.vz - reference.vz).powi(2))
        + 0.01 * (state.pitch_rate - reference.pitch_rate).powi(2);
    ImitationErrors {
        pose,
        velocity,
        end_effector,
        root,
    }
}

/// `sum_k w_k exp(-alpha_k e_k^2)` against the clip frame at `phase`.
pub fn imitation_reward(
    model: &RobotModel,
    state: &AgentState,
    clip: &MotionClip,
    phase: Phase,
    w: &ImitationRewardWeights,
) -> f64 {
    reward_from_errors(&imitation_errors(model, state, &clip.sample_state(phase)), w)
}

pub fn reward_from_errors(e: &ImitationErrors, w: &ImitationRewardWeights) -> f64 {
    w.pose * (-w.pose_scale * e.pose).exp()
        + w.velocity * (-w.velocity_scale * e.velocity).exp()
        + w.end_effector * (-w.end_effector_scale * e.end_effector).exp()
        + w.root * (-w.root_scale * e.root).exp()
}

/// Clip phase `steps` control steps after `phase`.
pub fn phase_ahead(clip: &MotionClip, phase: Phase, steps: usize, control_dt: f64) -> Phase {
    phase.advance(steps as f64 * control_dt, clip.period)
}

/// Observed state features, four future reference frames and the phase.
pub fn imitation_observation(observed: &AgentState, clip: &MotionClip, phase: Phase, control_dt: f64) -> Vec<f64> {
    let mut o = Vec::with_capacity(EXPERT_OBS_DIM);
    o.extend_from_slice(&observed.features());
    for k in FUTURE_OFFSETS {
        let f = TargetState::from(clip.sample_state(phase_ahead(clip, phase, k, control_dt)));
        o.extend_from_slice(&f.to_array());
    }
    o.push(phase.value());
    o
}

/// Everything that shapes expert training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub schema_version: u32,
    pub reward: ImitationRewardWeights,
    pub ppo: PpoConfig,
    pub hidden: Vec<usize>,
    /// Policy outputs are scaled by this before being added to the reference pose (rad).
    pub action_scale: f64,
    pub num_envs: usize,
    pub steps_per_env: usize,
    pub iterations: usize,
    pub episode_seconds: f64,
    /// Minimum mean per-step imitation reward over the final evaluation.
    pub reward_threshold: f64,
    pub eval_episodes: usize,
    pub eval_seconds: f64,
    /// Uniform perturbation of initial joint angles (rad) and velocities (rad/s).
    pub init_joint_noise: f64,
    pub init_joint_vel_noise: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            schema_version: EXPERT_SCHEMA_VERSION,
            reward: ImitationRewardWeights::default(),
            ppo: PpoConfig {
                entropy_coef: 0.0,
                ..PpoConfig::default()
            },
            hidden: crate::approx::HIDDEN.to_vec(),
            action_scale: 0.3,
            num_envs: 16,
            steps_per_env: 256,
            iterations: 600,
            episode_seconds: 10.0,
            reward_threshold: 0.5,
            eval_episodes: 100,
            eval_seconds: 10.0,
            init_joint_noise: 0.05,
            init_joint_vel_noise: 0.5,
        }
    }
}

impl ExpertConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != EXPERT_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                expected: EXPERT_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        self.reward.validate()?;
        if self.num_envs == 0 || self.steps_per_env == 0 || self.iterations == 0 || self.eval_episodes == 0 {
            return Err(ConfigError::Invalid("counts must be positive".into()));
        }
        if !(self.action_scale > 0.0) || !(self.episode_seconds > 0.0) || !(self.eval_seconds > 0.0) {
            return Err(ConfigError::Invalid("scales and durations must be positive".into()));
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

/// Provenance stored with a trained expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertMeta {
    pub kind: String,
    pub schema_version: u32,
    pub skill: String,
    pub clip_sha256: String,
    pub seed: u64,
    pub iterations: usize,
    pub final_imitation_reward: f64,
    pub obs_dim: usize,
    pub action_scale: f64,
    pub future_offsets: Vec<usize>,
}

/// A trained expert policy bound to its clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertArtifact {
    pub meta: ExpertMeta,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error(transparent)]
    Checkpoint(#[from] crate::approx::CheckpointError),
    #[error("artifact metadata: {0}")]
    Meta(String),
    #[error("artifact dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("clip checksum does not match the artifact")]
    ClipMismatch,
}

/// Hex sha256 of a clip's canonical file text.
pub fn clip_sha256(clip: &MotionClip) -> String {
    hex::encode(Sha256::digest(clip.to_toml_string().as_bytes()))
}

impl ExpertArtifact {
    pub fn new(meta: ExpertMeta, mut checkpoint: Checkpoint) -> Self {
        checkpoint.metadata = toml::to_string(&meta).expect("metadata serializes");
        checkpoint.norm.frozen = true;
        Self { meta, checkpoint }
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self, ArtifactError> {
        let meta: ExpertMeta = toml::from_str(&checkpoint.metadata).map_err(|e| ArtifactError::Meta(e.to_string()))?;
        if meta.kind != "expert" {
            return Err(ArtifactError::Meta(format!("expected an expert artifact, found {}", meta.kind)));
        }
        if meta.schema_version != EXPERT_SCHEMA_VERSION {
            return Err(ArtifactError::Meta(format!("unsupported schema version {}", meta.schema_version)));
        }
        if checkpoint.policy.obs_dim() != EXPERT_OBS_DIM || meta.obs_dim != EXPERT_OBS_DIM {
            return Err(ArtifactError::Dimension {
                expected: EXPERT_OBS_DIM,
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

    pub fn name(&self) -> &str {
        &self.meta.skill
    }

    /// Checks that `clip` is the clip this expert was trained on.
    pub fn check_clip(&self, clip: &MotionClip) -> Result<(), ArtifactError> {
        if clip_sha256(clip) != self.meta.clip_sha256 {
            return Err(ArtifactError::ClipMismatch);
        }
        Ok(())
    }
}

/// Runs an expert against its clip.
#[derive(Debug, Clone)]
pub struct ExpertPolicy<'a> {
    pub artifact: &'a ExpertArtifact,
    pub clip: &'a MotionClip,
    pub model: &'a RobotModel,
    pub control_dt: f64,
}

impl ExpertPolicy<'_> {
    /// PD targets given the raw network output and the phase the agent is
    /// currently tracking.
    pub fn command_from_output(&self, output: &[f64], phase: Phase) -> ActionCommand {
        let reference = self.clip.sample_state(phase_ahead(self.clip, phase, 1, self.control_dt));
        let mut t = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            t[j] = reference.joint_pos[j] + self.artifact.meta.action_scale * output[j];
        }
        ActionCommand::new(self.model.clamp_targets(&t))
    }

    /// Deterministic action for one observed state.
    pub fn act(&self, observed: &AgentState, phase: Phase) -> ActionCommand {
        let obs = imitation_observation(observed, self.clip, phase, self.control_dt);
        let out = self.artifact.checkpoint.act(&obs);
        self.command_from_output(&out, phase)
    }
}

/// Deterministic actions for many (observed state, phase) pairs sharing one
/// expert, evaluated as a single batch.
pub fn act_batch(policy: &ExpertPolicy<'_>, inputs: &[(AgentState, Phase)]) -> Vec<ActionCommand> {
    if inputs.is_empty() {
        return Vec::new();
    }
    let ck = &policy.artifact.checkpoint;
    let mut x = Array2::<f32>::zeros((inputs.len(), EXPERT_OBS_DIM));
    for (i, (s, p)) in inputs.iter().enumerate() {
        let o = imitation_observation(s, policy.clip, *p, policy.control_dt);
        ck.norm.normalize_into(&o, x.row_mut(i).as_slice_mut().expect("contiguous row"));
    }
    let out = ck.policy.forward(x.view());
    inputs
        .iter()
        .enumerate()
        .map(|(i, (_, p))| {
            let o: Vec<f64> = out.row(i).iter().map(|v| *v as f64).collect();
            policy.command_from_output(&o, *p)
        })
        .collect()
}
