//! Three-stage transition episodes, success matrices over ordered skill
//! pairs, target-phase profiles and PCA of visited states.

pub mod pca;
pub mod report;
pub mod stats;

pub use pca::{pca, Kde2, Pca, PcaError};
pub use stats::{
    direction_of, duration_summary, find_optimal_intervals, wilson_interval, CellStats, DurationSummary, PhaseProfile,
    SuccessMatrix, PHASE_BINS, Z_95,
};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clips::Phase;
use crate::runtime::{
    evaluate_batch, Controller, ControllerMode, LibraryError, TargetSampling, PolicyQuery, SkillLibrary, SwitchRequest,
    TickEvent,
};
use crate::simcore::{
    observe, ActionCommand, AgentState, RandomizationConfig, SimConfig, Simulator, TargetState, NUM_JOINTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "random-switch")]
    RandomSwitch,
    #[serde(rename = "linear-interp")]
    LinearInterp,
    #[serde(rename = "composer-R")]
    ComposerR,
    #[serde(rename = "composer-O")]
    ComposerO,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::RandomSwitch,
        Strategy::LinearInterp,
        Strategy::ComposerR,
        Strategy::ComposerO,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::RandomSwitch => "random-switch",
            Strategy::LinearInterp => "linear-interp",
            Strategy::ComposerR => "composer-R",
            Strategy::ComposerO => "composer-O",
        }
    }

    pub fn uses_composer(self) -> bool {
        matches!(self, Strategy::ComposerR | Strategy::ComposerO)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy {s}; expected one of random-switch, linear-interp, composer-R, composer-O"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Transition,
    Post,
    None,
}

/// One evaluated transition episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEpisodeResult {
    pub source: String,
    pub target: String,
    /// Source-clip phase when the transition stage began.
    pub source_phase: f64,
    pub target_phase: f64,
    pub strategy: Strategy,
    pub success: bool,
    pub failure_stage: FailureStage,
    /// Length of the transition stage (s).
    pub duration: f64,
    pub seed: u64,
    /// Episodes discarded because the source expert fell before the switch.
    pub redraws: usize,
}

/// Stage lengths of an evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// The switch is triggered uniformly between these times (s).
    pub trigger_min: f64,
    pub trigger_max: f64,
    pub interp_seconds: f64,
    pub post_seconds: f64,
    /// Give up on an episode after this many pre-stage falls.
    pub max_redraws: usize,
    pub randomization: RandomizationConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            trigger_min: 2.0,
            trigger_max: 3.0,
            interp_seconds: 0.5,
            post_seconds: 10.0,
            max_redraws: 20,
            randomization: RandomizationConfig::composer(),
        }
    }
}

/// Which target phase an episode enters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetPhase {
    /// Drawn according to the strategy.
    Sample,
    Fixed(Phase),
    /// The source tracker's phase at the moment of the switch.
    Continue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub source: usize,
    pub target: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub target_phase: TargetPhase,
    /// Keep the true states visited by the experts and during the
    /// transition stage.
    pub record: bool,
}

impl EpisodeSpec {
    pub fn new(source: usize, target: usize, strategy: Strategy, seed: u64) -> Self {
        Self {
            source,
            target,
            strategy,
            seed,
            target_phase: TargetPhase::Sample,
            record: false,
        }
    }
}

/// States visited during a recorded episode.
#[derive(Debug, Clone, Default)]
pub struct StateLog {
    pub expert: Vec<TargetState>,
    pub transition: Vec<TargetState>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("library: {0}")]
    Library(String),
    #[error("episode seed {seed}: source expert fell before the switch {redraws} times")]
    SourceUnstable { seed: u64, redraws: usize },
    #[error("episode seed {seed}: simulation failed: {detail}")]
    Simulation { seed: u64, detail: String },
}

impl From<LibraryError> for BenchError {
    fn from(e: LibraryError) -> Self {
        BenchError::Library(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Pre,
    /// Random switch: source expert keeps control until the switch instant.
    Wait,
    Interp,
    Transition,
    Post,
}

struct Episode {
    spec: EpisodeSpec,
    sim: Simulator,
    rng: ChaCha8Rng,
    ctrl: Controller,
    stage: Stage,
    stage_steps: usize,
    trigger_steps: usize,
    wait_steps: usize,
    pending: Option<SwitchRequest>,
    interp_from: [f64; NUM_JOINTS],
    interp_to: [f64; NUM_JOINTS],
    source_phase: f64,
    target_phase: Phase,
    duration: f64,
    redraws: usize,
    done: Option<(bool, FailureStage)>,
    invalid: Option<BenchError>,
    log: StateLog,
}

fn start_episode(
    lib: &SkillLibrary,
    sim_config: &SimConfig,
    cfg: &EpisodeConfig,
    spec: &EpisodeSpec,
    rng: &mut ChaCha8Rng,
) -> (Simulator, Controller, usize) {
    let dt = sim_config.control_dt();
    let params = cfg.randomization.sample_episode(rng);
    let phase = Phase::wrap(rng.random::<f64>());
    let mut s = lib.entry(spec.source).clip.sample_state(phase);
    s.x = 0.0;
    let mut sim = Simulator::new(sim_config.clone());
    sim.reset(s, params);
    let sampling = if spec.strategy == Strategy::ComposerO {
        TargetSampling::Optimal
    } else {
        TargetSampling::Random
    };
    let ctrl = Controller::new(spec.source, phase, sampling, dt);
    let trigger = rng.random_range(cfg.trigger_min..=cfg.trigger_max);
    (sim, ctrl, (trigger / dt).round() as usize)
}

impl Episode {
    fn new(lib: &SkillLibrary, sim_config: &SimConfig, cfg: &EpisodeConfig, spec: EpisodeSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (sim, ctrl, trigger_steps) = start_episode(lib, sim_config, cfg, &spec, &mut rng);
        Self {
            spec,
            sim,
            rng,
            ctrl,
            stage: Stage::Pre,
            stage_steps: 0,
            trigger_steps,
            wait_steps: 0,
            pending: None,
            interp_from: [0.0; NUM_JOINTS],
            interp_to: [0.0; NUM_JOINTS],
            source_phase: 0.0,
            target_phase: Phase::ZERO,
            duration: 0.0,
            redraws: 0,
            done: None,
            invalid: None,
            log: StateLog::default(),
        }
    }

    fn live(&self) -> bool {
        self.done.is_none() && self.invalid.is_none()
    }

    fn redraw(&mut self, lib: &SkillLibrary, sim_config: &SimConfig, cfg: &EpisodeConfig) {
        self.redraws += 1;
        if self.redraws > cfg.max_redraws {
            self.invalid = Some(BenchError::SourceUnstable {
                seed: self.spec.seed,
                redraws: self.redraws,
            });
            return;
        }
        let (sim, ctrl, trigger) = start_episode(lib, sim_config, cfg, &self.spec, &mut self.rng);
        self.sim = sim;
        self.ctrl = ctrl;
        self.trigger_steps = trigger;
        self.stage = Stage::Pre;
        self.stage_steps = 0;
        self.pending = None;
        self.log = StateLog::default();
    }

    fn current_phase(&self) -> Phase {
        match self.ctrl.mode {
            ControllerMode::Expert { phase, .. } => phase,
            ControllerMode::Transitioning { target_phase, .. } => target_phase,
        }
    }

    fn choose_target_phase(&mut self, lib: &SkillLibrary) -> Result<Phase, LibraryError> {
        Ok(match self.spec.target_phase {
            TargetPhase::Fixed(p) => p,
            TargetPhase::Continue => self.current_phase(),
            TargetPhase::Sample => {
                let src = lib.entry(self.spec.source).name().to_string();
                let dst = lib.entry(self.spec.target).name().to_string();
                lib.sample_target_phase(&src, &dst, self.ctrl.sampling, &mut self.rng)?
            }
        })
    }

    fn hand_over(&mut self) {
        self.ctrl.mode = ControllerMode::Expert {
            skill: self.spec.target,
            phase: self.target_phase,
        };
        self.stage = Stage::Post;
        self.stage_steps = 0;
    }

    /// Stage bookkeeping before choosing an action.
    fn advance_stage(&mut self, lib: &SkillLibrary, cfg: &EpisodeConfig, observed: &AgentState) -> Result<(), LibraryError> {
        let dt = self.ctrl.control_dt();
        if self.stage == Stage::Pre && self.stage_steps >= self.trigger_steps {
            self.source_phase = self.current_phase().value();
            match self.spec.strategy {
                Strategy::RandomSwitch => {
                    let period = lib.entry(self.spec.source).clip.period;
                    self.wait_steps = (self.rng.random_range(0.0..period) / dt).floor() as usize;
                    self.stage = Stage::Wait;
                    self.stage_steps = 0;
                }
                Strategy::LinearInterp => {
                    self.target_phase = self.choose_target_phase(lib)?;
                    self.interp_from = observed.joint_pos;
                    self.interp_to = lib.entry(self.spec.target).clip.sample_state(self.target_phase).joint_pos;
                    self.stage = Stage::Interp;
                    self.stage_steps = 0;
                }
                Strategy::ComposerR | Strategy::ComposerO => {
                    self.target_phase = self.choose_target_phase(lib)?;
                    let target = self.spec.target;
                    self.ctrl.begin_transition(lib, target, self.target_phase, observed)?;
                    self.stage = Stage::Transition;
                    self.stage_steps = 0;
                }
            }
        }
        if self.stage == Stage::Wait && self.stage_steps >= self.wait_steps {
            self.source_phase = self.current_phase().value();
            self.target_phase = self.choose_target_phase(lib)?;
            self.hand_over();
        }
        let interp_steps = ((cfg.interp_seconds / dt).round() as usize).max(1);
        if self.stage == Stage::Interp && self.stage_steps >= interp_steps {
            self.duration = interp_steps as f64 * dt;
            self.hand_over();
        }
        Ok(())
    }

    /// Builds this step's network query, or `None` for a scripted action.
    fn prepare(
        &mut self,
        lib: &SkillLibrary,
        cfg: &EpisodeConfig,
        observed: &AgentState,
    ) -> Result<Option<PolicyQuery>, LibraryError> {
        self.advance_stage(lib, cfg, observed)?;
        if self.stage == Stage::Interp {
            return Ok(None);
        }
        let (q, events) = self.ctrl.prepare(lib, observed, &mut self.pending, &mut self.rng)?;
        for e in events {
            if let TickEvent::TransitionEnded { duration, .. } = e {
                // the controller handed over inside prepare; the expert acts now
                self.duration = duration;
                self.stage = Stage::Post;
                self.stage_steps = 0;
            }
        }
        Ok(Some(q))
    }

    fn scripted_action(&self, cfg: &EpisodeConfig) -> ActionCommand {
        let dt = self.ctrl.control_dt();
        let n = ((cfg.interp_seconds / dt).round() as usize).max(1);
        let a = ((self.stage_steps + 1) as f64 / n as f64).min(1.0);
        let mut t = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            t[j] = self.interp_from[j] + a * (self.interp_to[j] - self.interp_from[j]);
        }
        ActionCommand::new(self.sim.config().model.clamp_targets(&t))
    }

    fn after_step(&mut self, lib: &SkillLibrary, sim_config: &SimConfig, cfg: &EpisodeConfig) {
        let dt = self.ctrl.control_dt();
        self.stage_steps += 1;
        if self.spec.record {
            let s = TargetState::from(*self.sim.state());
            match self.stage {
                Stage::Transition | Stage::Interp => self.log.transition.push(s),
                _ => self.log.expert.push(s),
            }
        }
        if self.sim.failed() {
            match self.stage {
                Stage::Pre | Stage::Wait => self.redraw(lib, sim_config, cfg),
                Stage::Interp | Stage::Transition => self.done = Some((false, FailureStage::Transition)),
                Stage::Post => self.done = Some((false, FailureStage::Post)),
            }
            return;
        }
        let post_steps = (cfg.post_seconds / dt).round() as usize;
        if self.stage == Stage::Post && self.stage_steps >= post_steps {
            self.done = Some((true, FailureStage::None));
        }
    }

    fn result(&self, lib: &SkillLibrary) -> Result<TransitionEpisodeResult, BenchError> {
        if let Some(e) = &self.invalid {
            return Err(e.clone());
        }
        let (success, failure_stage) = self.done.expect("episode finished");
        Ok(TransitionEpisodeResult {
            source: lib.entry(self.spec.source).name().to_string(),
            target: lib.entry(self.spec.target).name().to_string(),
            source_phase: self.source_phase,
            target_phase: self.target_phase.value(),
            strategy: self.spec.strategy,
            success,
            failure_stage,
            duration: self.duration,
            seed: self.spec.seed,
            redraws: self.redraws,
        })
    }
}

/// Runs all episodes in lockstep so that network evaluations are batched
/// per policy. Results are in the order of `specs`; an episode whose
/// simulation diverged or whose source expert kept falling is an `Err`.
pub fn run_episodes(
    lib: &SkillLibrary,
    sim_config: &SimConfig,
    cfg: &EpisodeConfig,
    specs: Vec<EpisodeSpec>,
) -> Vec<(Result<TransitionEpisodeResult, BenchError>, StateLog)> {
    let mut eps: Vec<Episode> = specs.into_iter().map(|s| Episode::new(lib, sim_config, cfg, s)).collect();
    loop {
        let mut queries = Vec::new();
        let mut owners = Vec::new();
        for (i, e) in eps.iter_mut().enumerate() {
            if !e.live() {
                continue;
            }
            let observed = observe(e.sim.state(), &cfg.randomization, &mut e.rng);
            match e.prepare(lib, cfg, &observed) {
                Ok(Some(q)) => {
                    owners.push(i);
                    queries.push(q);
                }
                Ok(None) => {}
                Err(err) => e.invalid = Some(err.into()),
            }
        }
        if eps.iter().all(|e| !e.live()) {
            break;
        }
        let outputs = match evaluate_batch(lib, &queries) {
            Ok(o) => o,
            Err(err) => {
                let err = BenchError::from(err);
                for e in eps.iter_mut().filter(|e| e.live()) {
                    e.invalid = Some(err.clone());
                }
                break;
            }
        };
        let mut out_iter = owners.into_iter().zip(outputs).peekable();
        for (i, e) in eps.iter_mut().enumerate() {
            if !e.live() {
                continue;
            }
            let cmd = if out_iter.peek().map(|(o, _)| *o) == Some(i) {
                let (_, out) = out_iter.next().expect("peeked");
                e.ctrl.apply(lib, &sim_config.model, &out)
            } else {
                e.scripted_action(cfg)
            };
            let cmd = cfg.randomization.perturb_action(&cmd, &mut e.rng);
            if let Err(err) = e.sim.step(&cmd) {
                log::warn!("episode seed {} invalid: {err}", e.spec.seed);
                e.invalid = Some(BenchError::Simulation {
                    seed: e.spec.seed,
                    detail: err.to_string(),
                });
                continue;
            }
            e.after_step(lib, sim_config, cfg);
        }
    }
    eps.into_iter()
        .map(|e| {
            let r = e.result(lib);
            (r, e.log)
        })
        .collect()
}

/// A single episode.
pub fn run_episode(
    lib: &SkillLibrary,
    sim_config: &SimConfig,
    cfg: &EpisodeConfig,
    spec: EpisodeSpec,
) -> Result<TransitionEpisodeResult, BenchError> {
    run_episodes(lib, sim_config, cfg, vec![spec]).pop().expect("one episode").0
}

/// Deterministic per-episode seed from the run seed and the cell coordinates.
pub fn episode_seed(base: u64, strategy: Strategy, source: usize, target: usize, k: usize) -> u64 {
    let mut z = base
        ^ (strategy as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ ((source as u64) << 48)
        ^ ((target as u64) << 32)
        ^ k as u64;
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Every ordered pair of library skills, self-pairs included.
pub fn all_pairs(lib: &SkillLibrary) -> Vec<(usize, usize)> {
    let n = lib.len();
    (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect()
}

/// Outcome of evaluating one strategy over a set of pairs.
pub struct MatrixRun {
    pub matrix: SuccessMatrix,
    pub episodes: Vec<TransitionEpisodeResult>,
    /// Episodes dropped as invalid, with the reason.
    pub invalid: Vec<String>,
}

/// Runs `n` episodes per pair, `chunk` episodes at a time, and aggregates
/// them into a success matrix.
pub fn build_matrix(
    lib: &SkillLibrary,
    sim_config: &SimConfig,
    cfg: &EpisodeConfig,
    strategy: Strategy,
    pairs: &[(usize, usize)],
    n: usize,
    seed: u64,
    chunk: usize,
) -> MatrixRun {
    assert!(n >= 1, "at least one episode per cell");
    let specs: Vec<EpisodeSpec> = pairs
        .iter()
        .flat_map(|&(a, b)| (0..n).map(move |k| EpisodeSpec::new(a, b, strategy, episode_seed(seed, strategy, a, b, k))))
        .collect();
    let mut episodes = Vec::with_capacity(specs.len());
    let mut invalid = Vec::new();
    let total = specs.len();
    for (c, batch) in specs.chunks(chunk.max(1)).enumerate() {
        for (r, _) in run_episodes(lib, sim_config, cfg, batch.to_vec()) {
            match r {
                Ok(e) => episodes.push(e),
                Err(err) => {
                    log::warn!("{strategy}: episode excluded: {err}");
                    invalid.push(err.to_string());
                }
            }
        }
        log::info!("{strategy}: {}/{total} episodes", ((c + 1) * chunk.max(1)).min(total));
    }
    MatrixRun {
        matrix: SuccessMatrix::from_results(strategy, &episodes),
        episodes,
        invalid,
    }
}
