use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    perturb_target, rms_torques, ComposerArtifact, ComposerConfig, ComposerMeta, ToleranceSchedule, TransitionDriver,
    TransitionOutcome, COMPOSER_OBS_DIM, COMPOSER_SCHEMA_VERSION,
};
use crate::approx::{Checkpoint, Env, Learner, PolicyNet, RunningNorm, Transition, ValueNet, VecCollector};
use crate::clips::{MotionClip, Phase};
use crate::error::TrainingError;
use crate::experts::{initial_state, ExpertArtifact, ExpertPolicy};
use crate::simcore::{observe, AgentState, RandomizationConfig, SimConfig, Simulator, TargetState, NUM_JOINTS};

/// A skill the composer trains on: its clip and, optionally, its expert,
/// used to start episodes from states the expert actually visits.
#[derive(Debug, Clone)]
pub struct ComposerSkill {
    pub clip: MotionClip,
    pub expert: Option<ExpertArtifact>,
}

/// Transition task between training skills. Each episode starts on a source
/// clip and must reach a noisy sample of a target clip within the horizon.
pub struct ComposerEnv {
    sim: Simulator,
    skills: Arc<Vec<ComposerSkill>>,
    cfg: Arc<ComposerConfig>,
    sched: Arc<ToleranceSchedule>,
    rand: RandomizationConfig,
    driver: Option<TransitionDriver>,
    /// Source and target skill indices of the current episode.
    pub pair: (usize, usize),
    /// How the current episode ended, once it has.
    pub outcome: Option<TransitionOutcome>,
}

impl ComposerEnv {
    pub fn new(
        sim_config: &SimConfig,
        skills: Arc<Vec<ComposerSkill>>,
        cfg: Arc<ComposerConfig>,
        sched: Arc<ToleranceSchedule>,
    ) -> Self {
        Self {
            rand: sim_config.randomization.composer,
            sim: Simulator::new(sim_config.clone()),
            skills,
            cfg,
            sched,
            driver: None,
            pair: (0, 0),
            outcome: None,
        }
    }

    fn control_dt(&self) -> f64 {
        self.sim.clock().control_dt()
    }

    /// Runs the source expert for a few steps from the clip frame. Leaves the
    /// simulator at the clip frame when there is no expert or it falls.
    fn warm_up(&mut self, src: usize, phase: Phase, start: AgentState, rng: &mut ChaCha8Rng) {
        let skill = &self.skills[src];
        let Some(expert) = &skill.expert else { return };
        if !rng.random_bool(self.cfg.expert_warmup_prob) || self.cfg.max_warmup_steps == 0 {
            return;
        }
        let dt = self.control_dt();
        let policy = ExpertPolicy {
            artifact: expert,
            clip: &skill.clip,
            model: &self.sim.config().model,
            control_dt: dt,
        };
        let steps = rng.random_range(1..=self.cfg.max_warmup_steps);
        let mut phase = phase;
        let mut sim = self.sim.clone();
        for _ in 0..steps {
            let o = observe(sim.state(), &self.rand, rng);
            let cmd = self.rand.perturb_action(&policy.act(&o, phase), rng);
            if sim.step(&cmd).is_err() || sim.failed() {
                self.sim.set_state(start);
                return;
            }
            phase = phase.advance(dt, skill.clip.period);
        }
        self.sim = sim;
    }

    fn sample_target(&self, rng: &mut ChaCha8Rng) -> (usize, TargetState) {
        let dst = rng.random_range(0..self.skills.len());
        let phase = Phase::wrap(rng.random::<f64>());
        let s = TargetState::from(self.skills[dst].clip.sample_state(phase));
        (dst, perturb_target(&s, &self.rand, rng))
    }
}

impl Env for ComposerEnv {
    fn obs_dim(&self) -> usize {
        COMPOSER_OBS_DIM
    }

    fn act_dim(&self) -> usize {
        NUM_JOINTS
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let params = self.rand.sample_episode(rng);
        let src = rng.random_range(0..self.skills.len());
        let phase = Phase::wrap(rng.random::<f64>());
        let start = initial_state(
            &self.skills[src].clip,
            phase,
            self.cfg.init_joint_noise,
            self.cfg.init_joint_vel_noise,
            rng,
        );
        self.sim.reset(start, params);
        self.warm_up(src, phase, *self.sim.state(), rng);
        let (dst, target) = self.sample_target(rng);
        self.pair = (src, dst);
        self.outcome = None;
        let o = observe(self.sim.state(), &self.rand, rng);
        let mut d = TransitionDriver::new(&o, target, self.sched.horizon, self.control_dt(), self.cfg.action_scale);
        let obs = d.observe(&o);
        self.driver = Some(d);
        obs
    }

    fn step(&mut self, action: &[f64], rng: &mut ChaCha8Rng) -> Result<Transition, TrainingError> {
        let driver = self.driver.as_mut().expect("reset before step");
        let cmd = driver.command(action, &self.sim.config().model);
        let cmd = self.rand.perturb_action(&cmd, rng);
        self.sim.step(&cmd)?;
        let (reward, outcome) = if self.sim.failed() {
            driver.step += 1;
            (super::BETA_VIOLATION, Some(TransitionOutcome::Violated))
        } else {
            let (_, r, o) = driver.advance(self.sim.state(), &rms_torques(self.sim.last_info()), &self.sched);
            (r, o)
        };
        self.outcome = outcome;
        let o = observe(self.sim.state(), &self.rand, rng);
        let obs = driver.observe(&o);
        Ok(Transition {
            obs,
            reward,
            // time is part of the observation, so every ending is absorbing
            terminal: outcome.is_some(),
            truncated: false,
            success: outcome == Some(TransitionOutcome::Reached),
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComposerCurveRow {
    pub iteration: usize,
    pub samples: usize,
    pub mean_step_reward: f64,
    pub mean_episode_reward: f64,
    pub mean_episode_length: f64,
    pub success_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub mean_std: f64,
}

/// Deterministic transition outcomes on random training pairs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComposerEval {
    pub episodes: usize,
    pub reached: usize,
    pub violated: usize,
    pub timeouts: usize,
    /// Mean time to reach the target over successful episodes (s).
    pub mean_duration: f64,
}

impl ComposerEval {
    pub fn success_rate(&self) -> f64 {
        self.reached as f64 / self.episodes.max(1) as f64
    }
}

pub struct TrainedComposer {
    pub artifact: ComposerArtifact,
    pub curve: Vec<ComposerCurveRow>,
    pub eval: ComposerEval,
}

fn check_skills(skills: &[ComposerSkill]) -> Result<(), TrainingError> {
    if skills.is_empty() {
        return Err(crate::error::ConfigError::Invalid("composer needs at least one training skill".into()).into());
    }
    for s in skills {
        if let Some(e) = &s.expert {
            e.check_clip(&s.clip)
                .map_err(|err| crate::error::ConfigError::Invalid(format!("{}: {err}", s.clip.name)))?;
        }
    }
    Ok(())
}

/// Trains the composer on transitions among `skills`. Fails if the final
/// success rate on training pairs is below `cfg.success_floor`.
pub fn train_composer(
    skills: &[ComposerSkill],
    sim_config: &SimConfig,
    cfg: &ComposerConfig,
    sched: &ToleranceSchedule,
    seed: u64,
) -> Result<TrainedComposer, TrainingError> {
    let trained = train_composer_unchecked(skills, sim_config, cfg, sched, seed)?;
    check_success_floor(&trained, cfg)?;
    Ok(trained)
}

/// Error when the final evaluation of `trained` misses `cfg.success_floor`.
pub fn check_success_floor(trained: &TrainedComposer, cfg: &ComposerConfig) -> Result<(), TrainingError> {
    if trained.eval.success_rate() < cfg.success_floor {
        return Err(TrainingError::ThresholdNotReached {
            threshold: cfg.success_floor,
            best: trained.eval.success_rate(),
            iterations: cfg.iterations,
            curve: trained.curve.iter().map(|r| r.success_rate).collect(),
        });
    }
    Ok(())
}

/// [`train_composer`] without the success floor, for callers that keep the
/// artifact either way.
pub fn train_composer_unchecked(
    skills: &[ComposerSkill],
    sim_config: &SimConfig,
    cfg: &ComposerConfig,
    sched: &ToleranceSchedule,
    seed: u64,
) -> Result<TrainedComposer, TrainingError> {
    cfg.validate()?;
    sched.validate()?;
    sim_config.validate()?;
    check_skills(skills)?;
    let skills_arc = Arc::new(skills.to_vec());
    let cfg_arc = Arc::new(cfg.clone());
    let sched_arc = Arc::new(sched.clone());
    let envs = (0..cfg.num_envs)
        .map(|_| ComposerEnv::new(sim_config, skills_arc.clone(), cfg_arc.clone(), sched_arc.clone()))
        .collect();
    let mut collector = VecCollector::new(envs, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0_3905e5);
    let policy = PolicyNet::<f32>::new(COMPOSER_OBS_DIM, &cfg.hidden, NUM_JOINTS, &mut rng);
    let value = ValueNet::<f32>::new(COMPOSER_OBS_DIM, &cfg.hidden, &mut rng);
    let mut learner = Learner::new(policy, value);
    let mut norm = RunningNorm::new(COMPOSER_OBS_DIM);
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut samples = 0;
    for it in 0..cfg.iterations {
        let c = collector.collect(&learner.policy, &learner.value, &mut norm, cfg.steps_per_env, cfg.ppo.gamma, cfg.ppo.lambda)?;
        samples += c.batch.len();
        let stats = learner.update(&c.batch, &cfg.ppo, cfg.ppo.lr_at(it, cfg.iterations), it, &mut rng)?;
        let n_ep = c.episodes.len().max(1) as f64;
        let row = ComposerCurveRow {
            iteration: it,
            samples,
            mean_step_reward: c.mean_step_reward,
            mean_episode_reward: c.episodes.iter().map(|e| e.reward).sum::<f64>() / n_ep,
            mean_episode_length: c.episodes.iter().map(|e| e.length as f64).sum::<f64>() / n_ep,
            success_rate: c.episodes.iter().filter(|e| e.success).count() as f64 / n_ep,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            approx_kl: stats.approx_kl,
            mean_std: learner.policy.std().iter().sum::<f64>() / NUM_JOINTS as f64,
        };
        if it % 10 == 0 || it + 1 == cfg.iterations {
            log::info!(
                "composer it {it}: success {:.3}, episode reward {:.1}, length {:.1}, kl {:.4}, std {:.3}",
                row.success_rate,
                row.mean_episode_reward,
                row.mean_episode_length,
                row.approx_kl,
                row.mean_std
            );
        }
        curve.push(row);
    }

    norm.frozen = true;
    let meta = ComposerMeta {
        kind: "composer".into(),
        schema_version: COMPOSER_SCHEMA_VERSION,
        training_skills: skills.iter().map(|s| s.clip.name.clone()).collect(),
        seed,
        iterations: cfg.iterations,
        obs_dim: COMPOSER_OBS_DIM,
        action_scale: cfg.action_scale,
        final_success_rate: 0.0,
        schedule: sched.clone(),
    };
    let checkpoint = Checkpoint {
        metadata: String::new(),
        policy: learner.policy,
        value: learner.value,
        norm,
    };
    let provisional = ComposerArtifact::new(meta.clone(), checkpoint.clone());
    let eval = evaluate_composer(&provisional, skills, sim_config, cfg, cfg.eval_episodes, seed.wrapping_add(7_000_001))?;
    let meta = ComposerMeta {
        final_success_rate: eval.success_rate(),
        ..meta
    };
    let artifact = ComposerArtifact::new(meta, checkpoint);
    Ok(TrainedComposer { artifact, curve, eval })
}

/// Composer with freshly initialized weights and no training.
pub fn untrained_composer(
    training_skills: &[String],
    cfg: &ComposerConfig,
    sched: &ToleranceSchedule,
    seed: u64,
) -> ComposerArtifact {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0_3905e5);
    let policy = PolicyNet::<f32>::new(COMPOSER_OBS_DIM, &cfg.hidden, NUM_JOINTS, &mut rng);
    let value = ValueNet::<f32>::new(COMPOSER_OBS_DIM, &cfg.hidden, &mut rng);
    let meta = ComposerMeta {
        kind: "composer".into(),
        schema_version: COMPOSER_SCHEMA_VERSION,
        training_skills: training_skills.to_vec(),
        seed,
        iterations: 0,
        obs_dim: COMPOSER_OBS_DIM,
        action_scale: cfg.action_scale,
        final_success_rate: 0.0,
        schedule: sched.clone(),
    };
    let mut norm = RunningNorm::new(COMPOSER_OBS_DIM);
    norm.frozen = true;
    ComposerArtifact::new(
        meta,
        Checkpoint {
            metadata: String::new(),
            policy,
            value,
            norm,
        },
    )
}

/// Deterministic rollouts of the composer on episodes drawn exactly as in
/// training, stepped as one batch.
pub fn evaluate_composer(
    artifact: &ComposerArtifact,
    skills: &[ComposerSkill],
    sim_config: &SimConfig,
    cfg: &ComposerConfig,
    episodes: usize,
    seed: u64,
) -> Result<ComposerEval, TrainingError> {
    check_skills(skills)?;
    let skills_arc = Arc::new(skills.to_vec());
    let cfg_arc = Arc::new(ComposerConfig {
        action_scale: artifact.meta.action_scale,
        ..cfg.clone()
    });
    let sched_arc = Arc::new(artifact.meta.schedule.clone());
    let dt = sim_config.control_dt();
    let mut envs: Vec<(ComposerEnv, ChaCha8Rng, Vec<f64>, Option<bool>, usize)> = (0..episodes)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut env = ComposerEnv::new(sim_config, skills_arc.clone(), cfg_arc.clone(), sched_arc.clone());
            let obs = env.reset(&mut rng);
            (env, rng, obs, None, 0)
        })
        .collect();
    let mut eval = ComposerEval {
        episodes,
        reached: 0,
        violated: 0,
        timeouts: 0,
        mean_duration: 0.0,
    };
    let mut durations = 0.0;
    loop {
        let live: Vec<usize> = (0..envs.len()).filter(|&i| envs[i].3.is_none()).collect();
        if live.is_empty() {
            break;
        }
        let obs: Vec<Vec<f64>> = live.iter().map(|&i| envs[i].2.clone()).collect();
        let outs = artifact.checkpoint.act_batch(&obs);
        for (&i, out) in live.iter().zip(&outs) {
            let (env, rng, obs, done, steps) = &mut envs[i];
            let tr = env.step(out, rng)?;
            *steps += 1;
            *obs = tr.obs;
            if tr.terminal {
                *done = Some(tr.success);
                match env.outcome {
                    Some(TransitionOutcome::Reached) => {
                        eval.reached += 1;
                        durations += *steps as f64 * dt;
                    }
                    Some(TransitionOutcome::Timeout) => eval.timeouts += 1,
                    _ => eval.violated += 1,
                }
            }
        }
    }
    eval.mean_duration = if eval.reached > 0 { durations / eval.reached as f64 } else { 0.0 };
    Ok(eval)
}

/// What happened during one transition.
#[derive(Debug, Clone)]
pub struct TransitionResult {
    pub outcome: TransitionOutcome,
    /// Time from start to termination (s).
    pub duration: f64,
    pub steps: usize,
    /// True states after every control step.
    pub trajectory: Vec<AgentState>,
    /// Indicator value after every control step.
    pub betas: Vec<f64>,
}

/// Drives `sim` from its current state toward `target` with the composer
/// until the target is reached, the tolerance band is left, the agent
/// falls or the horizon runs out. Observations and actions are randomized
/// with `rand`.
pub fn run_transition<R: Rng + ?Sized>(
    artifact: &ComposerArtifact,
    sim: &mut Simulator,
    target: TargetState,
    rand: &RandomizationConfig,
    rng: &mut R,
) -> Result<TransitionResult, TrainingError> {
    let dt = sim.clock().control_dt();
    let sched = artifact.schedule();
    let o = observe(sim.state(), rand, rng);
    let mut driver = artifact.driver(&o, target, dt);
    let mut obs = driver.observe(&o);
    let mut trajectory = Vec::with_capacity(driver.horizon_steps);
    let mut betas = Vec::with_capacity(driver.horizon_steps);
    loop {
        let out = artifact.checkpoint.act(&obs);
        let cmd = driver.command(&out, &sim.config().model);
        let cmd = rand.perturb_action(&cmd, rng);
        sim.step(&cmd)?;
        trajectory.push(*sim.state());
        let outcome = if sim.failed() {
            driver.step += 1;
            betas.push(super::BETA_VIOLATION);
            Some(TransitionOutcome::Violated)
        } else {
            let (beta, _, outcome) = driver.advance(sim.state(), &rms_torques(sim.last_info()), sched);
            betas.push(beta);
            outcome
        };
        if let Some(outcome) = outcome {
            return Ok(TransitionResult {
                outcome,
                duration: driver.elapsed(dt),
                steps: driver.step,
                trajectory,
                betas,
            });
        }
        let o = observe(sim.state(), rand, rng);
        obs = driver.observe(&o);
    }
}
