//! The live simulation owned by the tick loop.

use std::time::{SystemTime, UNIX_EPOCH};

use ecp_core::clips::Phase;
use ecp_core::runtime::{Controller, ControllerMode, SkillLibrary, SwitchRequest, TargetSampling, TickEvent};
use ecp_core::simcore::{observe, EpisodeParams, RandomizationConfig, SimConfig, Simulator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::protocol::{Command, ErrorCode, ModeView, OutcomeView, ServerMessage, TelemetryFrame};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("the library has no skills")]
    EmptyLibrary,
    #[error("the library has no composer")]
    NoComposer,
}

/// Skill the robot starts in and returns to on reset.
pub const HOME_SKILL: &str = "stand";

pub const MAX_SPEED: f64 = 16.0;

/// Simulator, controller and operator-visible state of one robot.
pub struct Session {
    lib: SkillLibrary,
    sim: Simulator,
    controller: Controller,
    pending: Option<SwitchRequest>,
    rng: ChaCha8Rng,
    noise: RandomizationConfig,
    params: EpisodeParams,
    home: usize,
    paused: bool,
    speed: f64,
    steps: u64,
    seq: u64,
    resets: u64,
    last_outcome: Option<OutcomeView>,
}

impl Session {
    pub fn new(lib: SkillLibrary, sim_config: SimConfig, seed: u64) -> Result<Self, SessionError> {
        if lib.is_empty() {
            return Err(SessionError::EmptyLibrary);
        }
        if lib.composer().is_none() {
            return Err(SessionError::NoComposer);
        }
        let home = lib.index_of(HOME_SKILL).unwrap_or(0);
        let params = EpisodeParams::nominal(&sim_config.model, &sim_config.contact);
        let noise = sim_config.randomization.composer;
        let dt = sim_config.control_dt();
        let sim = Simulator::new(sim_config);
        let mut s = Self {
            controller: Controller::new(home, Phase::ZERO, TargetSampling::Optimal, dt),
            lib,
            sim,
            pending: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
            params,
            home,
            paused: false,
            speed: 1.0,
            steps: 0,
            seq: 0,
            resets: 0,
            last_outcome: None,
        };
        s.restart();
        Ok(s)
    }

    fn restart(&mut self) {
        let start = self.lib.entry(self.home).clip.sample_state(Phase::ZERO);
        self.sim.reset(start, self.params);
        self.controller = Controller::new(self.home, Phase::ZERO, self.controller.sampling, self.controller.control_dt());
        self.pending = None;
    }

    pub fn skills(&self) -> Vec<String> {
        self.lib.names()
    }

    pub fn control_dt(&self) -> f64 {
        self.controller.control_dt()
    }

    pub fn sim_time(&self) -> f64 {
        self.steps as f64 * self.control_dt()
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn pending(&self) -> Option<&SwitchRequest> {
        self.pending.as_ref()
    }

    pub fn is_transitioning(&self) -> bool {
        self.controller.mode.is_transitioning()
    }

    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello {
            schema_version: crate::protocol::SCHEMA_VERSION,
            skills: self.skills(),
            control_hz: 1.0 / self.control_dt(),
            speed: self.speed,
            paused: self.paused,
        }
    }

    /// Applies one operator command. On error nothing changes.
    pub fn apply(&mut self, id: u64, cmd: &Command) -> ServerMessage {
        match cmd {
            Command::SwitchSkill { skill } => {
                if self.lib.index_of(skill).is_none() {
                    return ServerMessage::error(
                        Some(id),
                        ErrorCode::UnknownSkill,
                        format!("no skill named {skill:?}; known skills: {}", self.lib.names().join(", ")),
                    );
                }
                // a newer request replaces one that has not been acted on
                self.pending = Some(SwitchRequest {
                    target: skill.clone(),
                    timestamp: self.sim_time(),
                });
            }
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Reset => {
                self.restart();
                self.resets += 1;
            }
            Command::SetSpeed { speed } => {
                if !(speed.is_finite() && *speed > 0.0 && *speed <= MAX_SPEED) {
                    return ServerMessage::error(
                        Some(id),
                        ErrorCode::InvalidSpeed,
                        format!("speed must be in (0, {MAX_SPEED}], got {speed}"),
                    );
                }
                self.speed = *speed;
            }
        }
        ServerMessage::ack(id, cmd)
    }

    /// Advances one control step and returns its frame; nothing happens
    /// while paused.
    pub fn step(&mut self) -> Option<TelemetryFrame> {
        if self.paused {
            return None;
        }
        let observed = observe(self.sim.state(), &self.noise, &mut self.rng);
        let model = self.sim.model().clone();
        let result = self
            .controller
            .tick(&self.lib, &model, &observed, &mut self.pending, &mut self.rng);
        let (cmd, events) = match result {
            Ok(r) => r,
            Err(e) => {
                // only reachable through a library defect; keep serving
                log::error!("controller error: {e}; resetting");
                self.restart();
                self.resets += 1;
                self.steps += 1;
                return Some(self.frame());
            }
        };
        for ev in events {
            if let TickEvent::TransitionEnded {
                source,
                target,
                outcome,
                duration,
            } = ev
            {
                self.last_outcome = Some(OutcomeView {
                    source,
                    target,
                    outcome,
                    duration,
                    sim_time: self.sim_time(),
                });
            }
        }
        if let Err(e) = self.sim.step(&cmd) {
            log::warn!("{e}; resetting");
            self.restart();
            self.resets += 1;
        }
        self.steps += 1;
        Some(self.frame())
    }

    fn frame(&mut self) -> TelemetryFrame {
        self.seq += 1;
        let names = |i: usize| self.lib.entry(i).name().to_string();
        let mode = match &self.controller.mode {
            ControllerMode::Expert { skill, phase } => ModeView::Expert {
                skill: names(*skill),
                phase: phase.value(),
            },
            ControllerMode::Transitioning {
                source,
                target,
                target_phase,
                ..
            } => ModeView::Transitioning {
                source: names(*source),
                target: names(*target),
                target_phase: target_phase.value(),
            },
        };
        TelemetryFrame {
            seq: self.seq,
            wall_time: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            sim_time: self.sim_time(),
            state: *self.sim.state(),
            mode,
            transition_time: self.controller.transition_progress().map(|t| t.clamp(0.0, 1.0)),
            last_outcome: self.last_outcome.clone(),
            pending: self.pending.as_ref().map(|p| p.target.clone()),
            fallen: self.sim.failed(),
            speed: self.speed,
            resets: self.resets,
        }
    }
}
