use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    act_batch, clip_sha256, imitation_observation, imitation_reward, phase_ahead, ExpertArtifact, ExpertConfig,
    ExpertMeta, ExpertPolicy, EXPERT_OBS_DIM, EXPERT_SCHEMA_VERSION, FUTURE_OFFSETS,
};
use crate::approx::{Checkpoint, Env, Learner, PolicyNet, RunningNorm, Transition, ValueNet, VecCollector};
use crate::clips::{MotionClip, Phase};
use crate::error::TrainingError;
use crate::simcore::{observe, ActionCommand, AgentState, RandomizationConfig, SimConfig, Simulator, NUM_JOINTS};

/// Imitation task for one clip with reference-state initialization and early
/// termination on falls.
pub struct ExpertEnv {
    sim: Simulator,
    clip: Arc<MotionClip>,
    cfg: Arc<ExpertConfig>,
    rand: RandomizationConfig,
    phase: Phase,
    steps: usize,
    max_steps: usize,
    /// Phase drawn at the last reset.
    pub initial_phase: Phase,
}

impl ExpertEnv {
    pub fn new(sim_config: &SimConfig, clip: Arc<MotionClip>, cfg: Arc<ExpertConfig>) -> Self {
        let max_steps = (cfg.episode_seconds / sim_config.control_dt()).round() as usize;
        Self {
            rand: sim_config.randomization.expert,
            sim: Simulator::new(sim_config.clone()),
            clip,
            cfg,
            phase: Phase::ZERO,
            steps: 0,
            max_steps,
            initial_phase: Phase::ZERO,
        }
    }

    fn control_dt(&self) -> f64 {
        self.sim.clock().control_dt()
    }

    fn observation(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let o = observe(self.sim.state(), &self.rand, rng);
        imitation_observation(&o, &self.clip, self.phase, self.control_dt())
    }
}

/// Clip state at `phase` with `x` reset to zero and a small perturbation.
pub(crate) fn initial_state(clip: &MotionClip, phase: Phase, joint_noise: f64, vel_noise: f64, rng: &mut ChaCha8Rng) -> AgentState {
    let mut s = clip.sample_state(phase);
    s.x = 0.0;
    for j in 0..NUM_JOINTS {
        if joint_noise > 0.0 {
            s.joint_pos[j] += rng.random_range(-joint_noise..=joint_noise);
        }
        if vel_noise > 0.0 {
            s.joint_vel[j] += rng.random_range(-vel_noise..=vel_noise);
        }
    }
    s
}

impl Env for ExpertEnv {
    fn obs_dim(&self) -> usize {
        EXPERT_OBS_DIM
    }

    fn act_dim(&self) -> usize {
        NUM_JOINTS
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let params = self.rand.sample_episode(rng);
        self.phase = Phase::wrap(rng.random::<f64>());
        self.initial_phase = self.phase;
        let s = initial_state(&self.clip, self.phase, self.cfg.init_joint_noise, self.cfg.init_joint_vel_noise, rng);
        self.sim.reset(s, params);
        self.steps = 0;
        self.observation(rng)
    }

    fn step(&mut self, action: &[f64], rng: &mut ChaCha8Rng) -> Result<Transition, TrainingError> {
        let dt = self.control_dt();
        let reference = self.clip.sample_state(phase_ahead(&self.clip, self.phase, 1, dt));
        let mut t = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            t[j] = reference.joint_pos[j] + self.cfg.action_scale * action[j];
        }
        let cmd = self.rand.perturb_action(&ActionCommand::new(self.sim.model().clamp_targets(&t)), rng);
        self.sim.step(&cmd)?;
        self.phase = self.phase.advance(dt, self.clip.period);
        self.steps += 1;
        let failed = self.sim.failed();
        let reward = if failed {
            0.0
        } else {
            imitation_reward(self.sim.model(), self.sim.state(), &self.clip, self.phase, &self.cfg.reward)
        };
        let truncated = !failed && self.steps >= self.max_steps;
        Ok(Transition {
            obs: self.observation(rng),
            reward,
            terminal: failed,
            truncated,
            success: !failed,
        })
    }
}

/// One row of the learning-curve CSV.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LearningCurveRow {
    pub iteration: usize,
    pub samples: usize,
    pub mean_step_reward: f64,
    pub mean_episode_reward: f64,
    pub mean_episode_length: f64,
    pub fall_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub mean_std: f64,
}

/// Closed-loop evaluation of an expert from random clip phases.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExpertEval {
    pub episodes: usize,
    pub survived: usize,
    /// Mean over episodes of the summed reward divided by the full episode length.
    pub mean_imitation_reward: f64,
    /// Mean relative forward-speed error; zero for clips that do not travel.
    pub velocity_error: f64,
}

impl ExpertEval {
    pub fn survival_rate(&self) -> f64 {
        self.survived as f64 / self.episodes.max(1) as f64
    }
}

pub struct TrainedExpert {
    pub artifact: ExpertArtifact,
    pub curve: Vec<LearningCurveRow>,
    pub eval: ExpertEval,
}

/// Trains an expert on `clip`. Fails if the final evaluation misses the
/// configured reward threshold.
pub fn train_expert(
    clip: &MotionClip,
    sim_config: &SimConfig,
    cfg: &ExpertConfig,
    seed: u64,
) -> Result<TrainedExpert, TrainingError> {
    cfg.validate()?;
    sim_config.validate()?;
    let clip_arc = Arc::new(clip.clone());
    let cfg_arc = Arc::new(cfg.clone());
    let envs = (0..cfg.num_envs)
        .map(|_| ExpertEnv::new(sim_config, clip_arc.clone(), cfg_arc.clone()))
        .collect();
    let mut collector = VecCollector::new(envs, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_e8be27);
    let policy = PolicyNet::<f32>::new(EXPERT_OBS_DIM, &cfg.hidden, NUM_JOINTS, &mut rng);
    let value = ValueNet::<f32>::new(EXPERT_OBS_DIM, &cfg.hidden, &mut rng);
    let mut learner = Learner::new(policy, value);
    let mut norm = RunningNorm::new(EXPERT_OBS_DIM);
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut samples = 0;
    for it in 0..cfg.iterations {
        let c = collector.collect(&learner.policy, &learner.value, &mut norm, cfg.steps_per_env, cfg.ppo.gamma, cfg.ppo.lambda)?;
        samples += c.batch.len();
        let stats = learner.update(&c.batch, &cfg.ppo, cfg.ppo.lr_at(it, cfg.iterations), it, &mut rng)?;
        let n_ep = c.episodes.len().max(1) as f64;
        let row = LearningCurveRow {
            iteration: it,
            samples,
            mean_step_reward: c.mean_step_reward,
            mean_episode_reward: c.episodes.iter().map(|e| e.reward).sum::<f64>() / n_ep,
            mean_episode_length: c.episodes.iter().map(|e| e.length as f64).sum::<f64>() / n_ep,
            fall_rate: c.episodes.iter().filter(|e| e.terminal).count() as f64 / n_ep,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            approx_kl: stats.approx_kl,
            mean_std: learner.policy.std().iter().sum::<f64>() / NUM_JOINTS as f64,
        };
        if it % 10 == 0 || it + 1 == cfg.iterations {
            log::info!(
                "{} it {it}: step reward {:.3}, episode length {:.0}, falls {:.2}, kl {:.4}, std {:.3}",
                clip.name,
                row.mean_step_reward,
                row.mean_episode_length,
                row.fall_rate,
                row.approx_kl,
                row.mean_std
            );
        }
        curve.push(row);
    }

    norm.frozen = true;
    let meta = ExpertMeta {
        kind: "expert".into(),
        schema_version: EXPERT_SCHEMA_VERSION,
        skill: clip.name.clone(),
        clip_sha256: clip_sha256(clip),
        seed,
        iterations: cfg.iterations,
        final_imitation_reward: 0.0,
        obs_dim: EXPERT_OBS_DIM,
        action_scale: cfg.action_scale,
        future_offsets: FUTURE_OFFSETS.to_vec(),
    };
    let checkpoint = Checkpoint {
        metadata: String::new(),
        policy: learner.policy,
        value: learner.value,
        norm,
    };
    let provisional = ExpertArtifact::new(meta.clone(), checkpoint.clone());
    let eval = evaluate_expert(&provisional, clip, sim_config, cfg, cfg.eval_episodes, seed.wrapping_add(1_000_003))?;
    let meta = ExpertMeta {
        final_imitation_reward: eval.mean_imitation_reward,
        ..meta
    };
    let artifact = ExpertArtifact::new(meta, checkpoint);
    if eval.mean_imitation_reward < cfg.reward_threshold {
        return Err(TrainingError::ThresholdNotReached {
            threshold: cfg.reward_threshold,
            best: eval.mean_imitation_reward,
            iterations: cfg.iterations,
            curve: curve.iter().map(|r| r.mean_step_reward).collect(),
        });
    }
    Ok(TrainedExpert { artifact, curve, eval })
}

/// Expert with freshly initialized weights and no training. Its outputs
/// are close to zero, so it replays the reference pose open-loop.
pub fn untrained_expert(clip: &MotionClip, cfg: &ExpertConfig, seed: u64) -> ExpertArtifact {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_e8be27);
    let policy = PolicyNet::<f32>::new(EXPERT_OBS_DIM, &cfg.hidden, NUM_JOINTS, &mut rng);
    let value = ValueNet::<f32>::new(EXPERT_OBS_DIM, &cfg.hidden, &mut rng);
    let meta = ExpertMeta {
        kind: "expert".into(),
        schema_version: EXPERT_SCHEMA_VERSION,
        skill: clip.name.clone(),
        clip_sha256: clip_sha256(clip),
        seed,
        iterations: 0,
        final_imitation_reward: 0.0,
        obs_dim: EXPERT_OBS_DIM,
        action_scale: cfg.action_scale,
        future_offsets: FUTURE_OFFSETS.to_vec(),
    };
    let mut norm = RunningNorm::new(EXPERT_OBS_DIM);
    norm.frozen = true;
    ExpertArtifact::new(
        meta,
        Checkpoint {
            metadata: String::new(),
            policy,
            value,
            norm,
        },
    )
}

/// Runs `episodes` randomized closed-loop rollouts of `cfg.eval_seconds`
/// from uniformly drawn clip phases, all stepped in one batch.
pub fn evaluate_expert(
    artifact: &ExpertArtifact,
    clip: &MotionClip,
    sim_config: &SimConfig,
    cfg: &ExpertConfig,
    episodes: usize,
    seed: u64,
) -> Result<ExpertEval, TrainingError> {
    let rand = sim_config.randomization.expert;
    let dt = sim_config.control_dt();
    let steps = (cfg.eval_seconds / dt).round() as usize;
    let policy = ExpertPolicy {
        artifact,
        clip,
        model: &sim_config.model,
        control_dt: dt,
    };
    struct Ep {
        sim: Simulator,
        rng: ChaCha8Rng,
        phase: Phase,
        alive: bool,
        reward: f64,
        x0: f64,
    }
    let mut eps: Vec<Ep> = (0..episodes)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let params = rand.sample_episode(&mut rng);
            let phase = Phase::wrap(rng.random::<f64>());
            let s = initial_state(clip, phase, 0.0, 0.0, &mut rng);
            let mut sim = Simulator::new(sim_config.clone());
            sim.reset(s, params);
            Ep {
                sim,
                rng,
                phase,
                alive: true,
                reward: 0.0,
                x0: 0.0,
            }
        })
        .collect();
    for _ in 0..steps {
        let live: Vec<usize> = (0..eps.len()).filter(|&i| eps[i].alive).collect();
        if live.is_empty() {
            break;
        }
        let inputs: Vec<(AgentState, Phase)> = live
            .iter()
            .map(|&i| {
                let e = &mut eps[i];
                (observe(e.sim.state(), &rand, &mut e.rng), e.phase)
            })
            .collect();
        let cmds = act_batch(&policy, &inputs);
        for (&i, cmd) in live.iter().zip(&cmds) {
            let e = &mut eps[i];
            let cmd = rand.perturb_action(cmd, &mut e.rng);
            e.sim.step(&cmd)?;
            e.phase = e.phase.advance(dt, clip.period);
            if e.sim.failed() {
                e.alive = false;
            } else {
                e.reward += imitation_reward(&sim_config.model, e.sim.state(), clip, e.phase, &cfg.reward);
            }
        }
    }
    let survived = eps.iter().filter(|e| e.alive).count();
    let mean_reward = eps.iter().map(|e| e.reward / steps as f64).sum::<f64>() / episodes.max(1) as f64;
    let target_speed = clip.mean_velocity();
    let velocity_error = if target_speed.abs() > 1e-9 {
        let survivors: Vec<&Ep> = eps.iter().filter(|e| e.alive).collect();
        if survivors.is_empty() {
            1.0
        } else {
            survivors
                .iter()
                .map(|e| {
                    let speed = (e.sim.state().x - e.x0) / (steps as f64 * dt);
                    ((speed - target_speed) / target_speed).abs()
                })
                .sum::<f64>()
                / survivors.len() as f64
        }
    } else {
        0.0
    };
    Ok(ExpertEval {
        episodes,
        survived,
        mean_imitation_reward: mean_reward,
        velocity_error,
    })
}
