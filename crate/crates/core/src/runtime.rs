//! Skill library and the meta-controller that sequences experts through the
//! composer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::approx::file_sha256;
use crate::clips::{sample_phase, MotionClip, Phase};
pub use crate::clips::{PhaseInterval, TargetSampling};
use crate::composer::{ComposerArtifact, TransitionDriver, TransitionOutcome};
use crate::experts::{imitation_observation, ArtifactError, ExpertArtifact, ExpertPolicy, EXPERT_OBS_DIM};
use crate::simcore::{ActionCommand, AgentState, RobotModel, TargetState, NUM_JOINTS};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("skill {0} is already in the library")]
    Duplicate(String),
    #[error("unknown skill {0}")]
    UnknownSkill(String),
    #[error("{name}: observation dimension {found}, expected {expected}")]
    Dimension { name: String, expected: usize, found: usize },
    #[error("no composer loaded")]
    NoComposer,
    #[error("{path}: checksum {found} does not match manifest {expected}")]
    Checksum { path: PathBuf, expected: String, found: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Clip(#[from] crate::clips::ClipError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct SkillEntry {
    pub expert: ExpertArtifact,
    pub clip: MotionClip,
    /// Reliable target-phase intervals of this skill, keyed by source skill.
    pub optimal_intervals: BTreeMap<String, Vec<PhaseInterval>>,
}

impl SkillEntry {
    pub fn name(&self) -> &str {
        &self.clip.name
    }
}

fn bytes_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The experts available to the controller plus the composer that bridges them.
#[derive(Debug, Clone, Default)]
pub struct SkillLibrary {
    entries: Vec<SkillEntry>,
    composer: Option<ComposerArtifact>,
}

impl SkillLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_composer(composer: ComposerArtifact) -> Self {
        Self {
            entries: Vec::new(),
            composer: Some(composer),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name().to_string()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name() == name)
    }

    pub fn entry(&self, index: usize) -> &SkillEntry {
        &self.entries[index]
    }

    pub fn get(&self, name: &str) -> Result<&SkillEntry, LibraryError> {
        self.index_of(name)
            .map(|i| &self.entries[i])
            .ok_or_else(|| LibraryError::UnknownSkill(name.to_string()))
    }

    pub fn composer(&self) -> Option<&ComposerArtifact> {
        self.composer.as_ref()
    }

    pub fn set_composer(&mut self, composer: ComposerArtifact) {
        self.composer = Some(composer);
    }

    /// Adds an expert and its clip. Existing entries and the composer are
    /// not touched.
    pub fn add_skill(&mut self, expert: ExpertArtifact, clip: MotionClip) -> Result<(), LibraryError> {
        let name = clip.name.clone();
        if self.index_of(&name).is_some() {
            return Err(LibraryError::Duplicate(name));
        }
        let found = expert.checkpoint.policy.obs_dim();
        if found != EXPERT_OBS_DIM {
            return Err(LibraryError::Dimension {
                name,
                expected: EXPERT_OBS_DIM,
                found,
            });
        }
        if expert.checkpoint.policy.act_dim() != NUM_JOINTS {
            return Err(LibraryError::Dimension {
                name,
                expected: NUM_JOINTS,
                found: expert.checkpoint.policy.act_dim(),
            });
        }
        expert.check_clip(&clip)?;
        self.entries.push(SkillEntry {
            expert,
            clip,
            optimal_intervals: BTreeMap::new(),
        });
        Ok(())
    }

    pub fn set_optimal_intervals(
        &mut self,
        source: &str,
        target: &str,
        intervals: Vec<PhaseInterval>,
    ) -> Result<(), LibraryError> {
        self.get(source)?;
        let i = self.index_of(target).ok_or_else(|| LibraryError::UnknownSkill(target.to_string()))?;
        self.entries[i].optimal_intervals.insert(source.to_string(), intervals);
        Ok(())
    }

    /// Draws the phase at which `target` is entered from `source`.
    pub fn sample_target_phase<R: Rng + ?Sized>(
        &self,
        source: &str,
        target: &str,
        sampling: TargetSampling,
        rng: &mut R,
    ) -> Result<Phase, LibraryError> {
        let entry = self.get(target)?;
        let intervals = entry.optimal_intervals.get(source).map(Vec::as_slice).unwrap_or(&[]);
        // without measured intervals the whole cycle is used
        Ok(sample_phase(sampling, intervals, rng).or_else(|_| sample_phase(TargetSampling::Random, &[], rng)).expect("uniform draw"))
    }

    /// SHA-256 of every serialized artifact, keyed by skill name; the
    /// composer is listed under `"composer"`.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        let mut m: BTreeMap<String, String> = self
            .entries
            .iter()
            .map(|e| (e.name().to_string(), bytes_sha256(&e.expert.checkpoint.to_bytes())))
            .collect();
        if let Some(c) = &self.composer {
            m.insert("composer".into(), bytes_sha256(&c.checkpoint.to_bytes()));
        }
        m
    }

    pub fn expert_policy<'a>(&'a self, index: usize, model: &'a RobotModel, control_dt: f64) -> ExpertPolicy<'a> {
        let e = &self.entries[index];
        ExpertPolicy {
            artifact: &e.expert,
            clip: &e.clip,
            model,
            control_dt,
        }
    }
}

/// One skill entry of a manifest; paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSkill {
    pub name: String,
    pub expert: PathBuf,
    pub expert_sha256: String,
    pub clip: PathBuf,
    #[serde(default)]
    pub optimal_intervals: BTreeMap<String, Vec<PhaseInterval>>,
}

/// On-disk description of a skill library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub composer: Option<PathBuf>,
    pub composer_sha256: Option<String>,
    pub skills: Vec<ManifestSkill>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, LibraryError> {
        let text = std::fs::read_to_string(path).map_err(|source| LibraryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let m: Manifest = toml::from_str(&text).map_err(|e| LibraryError::Manifest(e.to_string()))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(LibraryError::Manifest(format!("unsupported schema version {}", m.schema_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), LibraryError> {
        let text = toml::to_string_pretty(self).map_err(|e| LibraryError::Manifest(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| LibraryError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Loads every artifact, verifying the recorded checksums.
    pub fn load_library(&self, base: &Path) -> Result<SkillLibrary, LibraryError> {
        let verify = |rel: &Path, expected: &str| -> Result<PathBuf, LibraryError> {
            let path = base.join(rel);
            let found = file_sha256(&path).map_err(|source| LibraryError::Io {
                path: path.clone(),
                source,
            })?;
            if found != expected {
                return Err(LibraryError::Checksum {
                    path,
                    expected: expected.to_string(),
                    found,
                });
            }
            Ok(path)
        };
        let mut lib = SkillLibrary::new();
        if let Some(rel) = &self.composer {
            let expected = self
                .composer_sha256
                .as_deref()
                .ok_or_else(|| LibraryError::Manifest("composer listed without a checksum".into()))?;
            lib.set_composer(ComposerArtifact::load(&verify(rel, expected)?)?);
        }
        for s in &self.skills {
            let expert = ExpertArtifact::load(&verify(&s.expert, &s.expert_sha256)?)?;
            let clip = MotionClip::load(&base.join(&s.clip))?;
            if clip.name != s.name {
                return Err(LibraryError::Manifest(format!("clip {} listed under {}", clip.name, s.name)));
            }
            lib.add_skill(expert, clip)?;
        }
        for s in &self.skills {
            for (source, iv) in &s.optimal_intervals {
                lib.set_optimal_intervals(source, &s.name, iv.clone())?;
            }
        }
        Ok(lib)
    }
}

/// Request to hand control to another skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRequest {
    pub target: String,
    /// Simulated time at which the request was made (s).
    pub timestamp: f64,
}

#[derive(Debug, Clone)]
pub enum ControllerMode {
    Expert {
        skill: usize,
        phase: Phase,
    },
    Transitioning {
        source: usize,
        target: usize,
        target_phase: Phase,
        driver: Box<TransitionDriver>,
        /// Whether an action has been issued since the last assessment.
        acted: bool,
    },
}

impl ControllerMode {
    pub fn is_transitioning(&self) -> bool {
        matches!(self, ControllerMode::Transitioning { .. })
    }
}

/// Something that happened during a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TickEvent {
    TransitionStarted {
        source: String,
        target: String,
        target_phase: f64,
    },
    TransitionEnded {
        source: String,
        target: String,
        outcome: TransitionOutcome,
        duration: f64,
    },
}

/// Which network a tick needs evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyRef {
    Expert(usize),
    Composer,
}

/// A network evaluation requested by [`Controller::prepare`].
#[derive(Debug, Clone)]
pub struct PolicyQuery {
    pub policy: PolicyRef,
    pub obs: Vec<f64>,
}

/// Meta-controller state for one robot. A tick is split in two so that many
/// controllers can share batched network evaluations: `prepare` picks the
/// policy and builds its observation, `apply` turns the network output into
/// joint targets.
#[derive(Debug, Clone)]
pub struct Controller {
    pub mode: ControllerMode,
    pub sampling: TargetSampling,
    control_dt: f64,
}

impl Controller {
    pub fn new(skill: usize, phase: Phase, sampling: TargetSampling, control_dt: f64) -> Self {
        Self {
            mode: ControllerMode::Expert { skill, phase },
            sampling,
            control_dt,
        }
    }

    pub fn control_dt(&self) -> f64 {
        self.control_dt
    }

    /// Index of the skill currently in charge; the target while transitioning.
    pub fn active_skill(&self) -> usize {
        match &self.mode {
            ControllerMode::Expert { skill, .. } => *skill,
            ControllerMode::Transitioning { target, .. } => *target,
        }
    }

    /// Normalized transition time, when transitioning.
    pub fn transition_progress(&self) -> Option<f64> {
        match &self.mode {
            ControllerMode::Transitioning { driver, .. } => Some(driver.ctx.t),
            _ => None,
        }
    }

    /// Starts a transition from the current expert to `target` entered at
    /// `target_phase`.
    pub fn begin_transition(
        &mut self,
        lib: &SkillLibrary,
        target: usize,
        target_phase: Phase,
        observed: &AgentState,
    ) -> Result<TickEvent, LibraryError> {
        let composer = lib.composer().ok_or(LibraryError::NoComposer)?;
        let source = self.active_skill();
        let t_state = TargetState::from(lib.entry(target).clip.sample_state(target_phase));
        let driver = composer.driver(observed, t_state, self.control_dt);
        self.mode = ControllerMode::Transitioning {
            source,
            target,
            target_phase,
            driver: Box::new(driver),
            acted: false,
        };
        Ok(TickEvent::TransitionStarted {
            source: lib.entry(source).name().to_string(),
            target: lib.entry(target).name().to_string(),
            target_phase: target_phase.value(),
        })
    }

    /// Assesses a running transition and either hands over to the target
    /// expert or builds the composer observation; in expert mode, starts a
    /// pending switch or builds the expert observation. A pending request is
    /// consumed only when it is acted on; requests that arrive during a
    /// transition stay pending until the handoff.
    pub fn prepare<R: Rng + ?Sized>(
        &mut self,
        lib: &SkillLibrary,
        observed: &AgentState,
        pending: &mut Option<SwitchRequest>,
        rng: &mut R,
    ) -> Result<(PolicyQuery, Vec<TickEvent>), LibraryError> {
        let mut events = Vec::new();
        if let ControllerMode::Transitioning {
            source,
            target,
            target_phase,
            driver,
            acted,
        } = &mut self.mode
        {
            if *acted {
                let composer = lib.composer().ok_or(LibraryError::NoComposer)?;
                let (_, outcome) = driver.assess(observed, composer.schedule());
                *acted = false;
                if let Some(outcome) = outcome {
                    events.push(TickEvent::TransitionEnded {
                        source: lib.entry(*source).name().to_string(),
                        target: lib.entry(*target).name().to_string(),
                        outcome,
                        duration: driver.elapsed(self.control_dt),
                    });
                    self.mode = ControllerMode::Expert {
                        skill: *target,
                        phase: *target_phase,
                    };
                }
            }
        }
        if let (ControllerMode::Expert { skill, .. }, Some(req)) = (&self.mode, pending.as_ref()) {
            let target = lib
                .index_of(&req.target)
                .ok_or_else(|| LibraryError::UnknownSkill(req.target.clone()))?;
            let source = lib.entry(*skill).name().to_string();
            let phase = lib.sample_target_phase(&source, &req.target, self.sampling, rng)?;
            *pending = None;
            events.push(self.begin_transition(lib, target, phase, observed)?);
        }
        let query = match &mut self.mode {
            ControllerMode::Expert { skill, phase } => {
                let e = lib.entry(*skill);
                PolicyQuery {
                    policy: PolicyRef::Expert(*skill),
                    obs: imitation_observation(observed, &e.clip, *phase, self.control_dt),
                }
            }
            ControllerMode::Transitioning { driver, .. } => PolicyQuery {
                policy: PolicyRef::Composer,
                obs: driver.observe(observed),
            },
        };
        Ok((query, events))
    }

    /// Joint targets from the output of the network named by the last
    /// query; advances the phase tracker in expert mode.
    pub fn apply(&mut self, lib: &SkillLibrary, model: &RobotModel, output: &[f64]) -> ActionCommand {
        let dt = self.control_dt;
        match &mut self.mode {
            ControllerMode::Expert { skill, phase } => {
                let cmd = lib.expert_policy(*skill, model, dt).command_from_output(output, *phase);
                *phase = phase.advance(dt, lib.entry(*skill).clip.period);
                cmd
            }
            ControllerMode::Transitioning { driver, acted, .. } => {
                *acted = true;
                driver.command(output, model)
            }
        }
    }

    /// One full control step with unbatched network evaluation.
    pub fn tick<R: Rng + ?Sized>(
        &mut self,
        lib: &SkillLibrary,
        model: &RobotModel,
        observed: &AgentState,
        pending: &mut Option<SwitchRequest>,
        rng: &mut R,
    ) -> Result<(ActionCommand, Vec<TickEvent>), LibraryError> {
        let (q, events) = self.prepare(lib, observed, pending, rng)?;
        let out = evaluate(lib, &q)?;
        Ok((self.apply(lib, model, &out), events))
    }
}

/// Deterministic output of the network named by `query`.
pub fn evaluate(lib: &SkillLibrary, query: &PolicyQuery) -> Result<Vec<f64>, LibraryError> {
    Ok(match query.policy {
        PolicyRef::Expert(i) => lib.entry(i).expert.checkpoint.act(&query.obs),
        PolicyRef::Composer => lib.composer().ok_or(LibraryError::NoComposer)?.checkpoint.act(&query.obs),
    })
}

/// Evaluates many queries, one batch per distinct network. Outputs are in
/// query order.
pub fn evaluate_batch(lib: &SkillLibrary, queries: &[PolicyQuery]) -> Result<Vec<Vec<f64>>, LibraryError> {
    let mut groups: BTreeMap<PolicyRef, Vec<usize>> = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        groups.entry(q.policy).or_default().push(i);
    }
    let mut out = vec![Vec::new(); queries.len()];
    for (policy, idx) in groups {
        let ck = match policy {
            PolicyRef::Expert(i) => &lib.entry(i).expert.checkpoint,
            PolicyRef::Composer => &lib.composer().ok_or(LibraryError::NoComposer)?.checkpoint,
        };
        let obs: Vec<Vec<f64>> = idx.iter().map(|&i| queries[i].obs.clone()).collect();
        for (i, o) in idx.into_iter().zip(ck.act_batch(&obs)) {
            out[i] = o;
        }
    }
    Ok(out)
}
