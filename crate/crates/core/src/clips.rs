//! Parametric periodic reference clips and phase-indexed lookups.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;
use crate::simcore::{angle_diff, wrap_angle, AgentState, RobotModel, TargetState, NUM_JOINTS, NUM_LEGS};

pub const CLIP_SCHEMA_VERSION: u32 = 1;

/// Nominal frame rate used when generating clips (Hz).
pub const DEFAULT_FRAME_RATE: f64 = 60.0;

#[derive(Debug, Error)]
pub enum ClipError {
    #[error("invalid gait spec: {0}")]
    InvalidSpec(String),
    #[error("gait {name} is infeasible at phase {phase:.3}: {reason}")]
    Infeasible { name: String, phase: f64, reason: String },
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("optimal-phase sampling needs at least one interval")]
    EmptyIntervals,
    #[error("phase {0} outside [0, 1)")]
    PhaseRange(f64),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Normalized position within a clip period, in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Phase(f64);

impl Phase {
    pub const ZERO: Phase = Phase(0.0);

    pub fn new(v: f64) -> Result<Self, ClipError> {
        if (0.0..1.0).contains(&v) {
            Ok(Self(v))
        } else {
            Err(ClipError::PhaseRange(v))
        }
    }

    /// Wraps any finite value into `[0, 1)`.
    pub fn wrap(v: f64) -> Self {
        let w = v.rem_euclid(1.0);
        // rem_euclid can return 1.0 for tiny negative inputs
        Self(if w >= 1.0 { 0.0 } else { w })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn advance(self, dt: f64, period: f64) -> Self {
        Self::wrap(self.0 + dt / period)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaitFamily {
    Walk,
    TrotLike,
    PaceLike,
    Hop,
    Stand,
}

/// Parameters of a periodic gait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitSpec {
    pub name: String,
    pub family: GaitFamily,
    /// +1 forward, -1 backward, 0 in place.
    pub direction: i8,
    /// Stride frequency (Hz).
    pub frequency: f64,
    /// Fraction of the cycle each foot spends on the ground.
    pub duty_factor: f64,
    /// Leg phase offsets, ordered FL, FR, RL, RR.
    pub phase_offsets: [f64; NUM_LEGS],
    /// Body displacement per cycle (m).
    pub stride_length: f64,
    /// Peak foot clearance during swing (m).
    pub step_height: f64,
    /// Hip-to-foot-centre leg extension at nominal height (m).
    pub leg_extension: f64,
}

impl GaitSpec {
    pub fn validate(&self) -> Result<(), ClipError> {
        let bad = |m: String| Err(ClipError::InvalidSpec(format!("{}: {m}", self.name)));
        if !(self.duty_factor > 0.0 && self.duty_factor <= 1.0) {
            return bad(format!("duty factor {} outside (0, 1]", self.duty_factor));
        }
        if !(self.frequency > 0.0) || !self.frequency.is_finite() {
            return bad(format!("frequency {} must be positive", self.frequency));
        }
        if self.phase_offsets.iter().any(|o| !(0.0..1.0).contains(o)) {
            return bad("phase offsets must lie in [0, 1)".into());
        }
        if ![-1, 0, 1].contains(&self.direction) {
            return bad(format!("direction {} not in {{-1, 0, 1}}", self.direction));
        }
        if self.stride_length < 0.0 || self.step_height < 0.0 || !(self.leg_extension > 0.0) {
            return bad("stride, step height must be >= 0 and leg extension > 0".into());
        }
        if self.family == GaitFamily::Hop && self.duty_factor >= 1.0 {
            return bad("a hop needs a flight phase (duty factor < 1)".into());
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    /// Forward body speed implied by these gait parameters.
    pub fn body_speed(&self) -> f64 {
        self.direction as f64 * self.stride_length * self.frequency
    }
}

/// The six skills used throughout: walk and trot in both directions, an
/// in-place hop and standing.
pub fn default_gaits() -> Vec<GaitSpec> {
    let walk_offsets = [0.25, 0.75, 0.0, 0.5];
    let trot_offsets = [0.0, 0.5, 0.5, 0.0];
    let walk = |name: &str, direction| GaitSpec {
        name: name.into(),
        family: GaitFamily::Walk,
        direction,
        frequency: 1.5,
        duty_factor: 0.75,
        phase_offsets: walk_offsets,
        stride_length: 0.24,
        step_height: 0.05,
        leg_extension: 0.28,
    };
    let trot = |name: &str, direction| GaitSpec {
        name: name.into(),
        family: GaitFamily::TrotLike,
        direction,
        frequency: 2.5,
        duty_factor: 0.5,
        phase_offsets: trot_offsets,
        stride_length: 0.2,
        step_height: 0.06,
        leg_extension: 0.28,
    };
    vec![
        walk("walk-F", 1),
        walk("walk-B", -1),
        trot("trot-F", 1),
        trot("trot-B", -1),
        GaitSpec {
            name: "hop".into(),
            family: GaitFamily::Hop,
            direction: 0,
            frequency: 2.5,
            duty_factor: 0.7,
            phase_offsets: [0.0; NUM_LEGS],
            stride_length: 0.0,
            step_height: 0.0,
            leg_extension: 0.28,
        },
        GaitSpec {
            name: "stand".into(),
            family: GaitFamily::Stand,
            direction: 0,
            frequency: 1.0,
            duty_factor: 1.0,
            phase_offsets: [0.0; NUM_LEGS],
            stride_length: 0.0,
            step_height: 0.0,
            leg_extension: 0.28,
        },
    ]
}

/// A periodic reference trajectory. Frame `n` closes the cycle: it repeats
/// frame 0 shifted forward by `root_displacement`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionClip {
    pub name: String,
    pub period: f64,
    pub sample_rate: f64,
    pub root_displacement: f64,
    pub frames: Vec<AgentState>,
}

impl MotionClip {
    pub fn validate(&self) -> Result<(), ClipError> {
        let bad = |m: String| Err(ClipError::InvalidClip(format!("{}: {m}", self.name)));
        if self.frames.len() < 2 {
            return bad(format!("needs at least 2 frames, has {}", self.frames.len()));
        }
        if !(self.period > 0.0) {
            return bad(format!("period {} must be positive", self.period));
        }
        let intervals = (self.frames.len() - 1) as f64;
        if ((self.sample_rate * self.period) - intervals).abs() > 1e-6 * intervals {
            return bad(format!(
                "sample rate {} and period {} imply {} intervals, clip has {intervals}",
                self.sample_rate,
                self.period,
                self.sample_rate * self.period
            ));
        }
        let first = &self.frames[0];
        let last = &self.frames[self.frames.len() - 1];
        for j in 0..NUM_JOINTS {
            if (first.joint_pos[j] - last.joint_pos[j]).abs() > 1e-6 {
                return bad(format!("joint {j} does not close the cycle"));
            }
        }
        if self.frames.iter().any(|f| !f.is_finite()) {
            return bad("non-finite frame values".into());
        }
        Ok(())
    }

    pub fn intervals(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn frame_dt(&self) -> f64 {
        self.period / self.intervals() as f64
    }

    /// Reference state at `phase`, linearly interpolated between neighbouring
    /// frames. Pitch is interpolated along the shorter arc; contact flags come
    /// from the nearest frame. `x` is the in-cycle root displacement.
    pub fn sample_state(&self, phase: Phase) -> AgentState {
        let n = self.intervals();
        let u = phase.value() * n as f64;
        let k = (u.floor() as usize).min(n - 1);
        let frac = u - k as f64;
        let a = &self.frames[k];
        let b = &self.frames[k + 1];
        if frac == 0.0 {
            return *a;
        }
        let lerp = |x: f64, y: f64| x + frac * (y - x);
        let mut s = AgentState {
            x: lerp(a.x, b.x),
            z: lerp(a.z, b.z),
            pitch: wrap_angle(a.pitch + frac * angle_diff(b.pitch, a.pitch)),
            vx: lerp(a.vx, b.vx),
            vz: lerp(a.vz, b.vz),
            pitch_rate: lerp(a.pitch_rate, b.pitch_rate),
            joint_pos: [0.0; NUM_JOINTS],
            joint_vel: [0.0; NUM_JOINTS],
            contacts: if frac < 0.5 { a.contacts } else { b.contacts },
        };
        for j in 0..NUM_JOINTS {
            s.joint_pos[j] = lerp(a.joint_pos[j], b.joint_pos[j]);
            s.joint_vel[j] = lerp(a.joint_vel[j], b.joint_vel[j]);
        }
        s
    }

    /// Mean forward velocity over a cycle.
    pub fn mean_velocity(&self) -> f64 {
        self.root_displacement / self.period
    }

    pub fn save(&self, path: &Path) -> Result<(), ClipError> {
        std::fs::write(path, ClipFile::from(self).to_toml()).map_err(|e| ConfigError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClipError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ClipError> {
        let file: ClipFile = toml::from_str(text).map_err(ConfigError::from)?;
        file.into_clip()
    }

    pub fn to_toml_string(&self) -> String {
        ClipFile::from(self).to_toml()
    }
}

/// Column names of the on-disk frame table, with units.
pub fn clip_columns() -> Vec<String> {
    let mut c: Vec<String> = ["x_m", "z_m", "pitch_rad", "vx_m_per_s", "vz_m_per_s", "pitch_rate_rad_per_s"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for j in 0..NUM_JOINTS {
        c.push(format!("q{j}_rad"));
    }
    for j in 0..NUM_JOINTS {
        c.push(format!("qd{j}_rad_per_s"));
    }
    for l in crate::simcore::state::LEG_NAMES {
        c.push(format!("contact_{l}"));
    }
    c
}

/// On-disk clip layout: header plus a row-major frame table.
#[derive(Debug, Serialize, Deserialize)]
struct ClipFile {
    schema_version: u32,
    name: String,
    period_s: f64,
    sample_rate_hz: f64,
    root_displacement_m: f64,
    columns: Vec<String>,
    frames: Vec<Vec<f64>>,
}

impl From<&MotionClip> for ClipFile {
    fn from(c: &MotionClip) -> Self {
        let frames = c
            .frames
            .iter()
            .map(|f| {
                let mut row = vec![f.x, f.z, f.pitch, f.vx, f.vz, f.pitch_rate];
                row.extend_from_slice(&f.joint_pos);
                row.extend_from_slice(&f.joint_vel);
                row.extend(f.contacts.iter().map(|b| if *b { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        Self {
            schema_version: CLIP_SCHEMA_VERSION,
            name: c.name.clone(),
            period_s: c.period,
            sample_rate_hz: c.sample_rate,
            root_displacement_m: c.root_displacement,
            columns: clip_columns(),
            frames,
        }
    }
}

impl ClipFile {
    fn to_toml(&self) -> String {
        toml::to_string(self).expect("clip serializes")
    }

    fn into_clip(self) -> Result<MotionClip, ClipError> {
        if self.schema_version != CLIP_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                expected: CLIP_SCHEMA_VERSION,
                found: self.schema_version,
            }
            .into());
        }
        let cols = clip_columns();
        if self.columns != cols {
            return Err(ClipError::InvalidClip("unexpected column layout".into()));
        }
        let mut frames = Vec::with_capacity(self.frames.len());
        for (i, row) in self.frames.iter().enumerate() {
            if row.len() != cols.len() {
                return Err(ClipError::InvalidClip(format!("frame {i} has {} values", row.len())));
            }
            let mut f = AgentState {
                x: row[0],
                z: row[1],
                pitch: row[2],
                vx: row[3],
                vz: row[4],
                pitch_rate: row[5],
                ..AgentState::default()
            };
            f.joint_pos.copy_from_slice(&row[6..6 + NUM_JOINTS]);
            f.joint_vel.copy_from_slice(&row[6 + NUM_JOINTS..6 + 2 * NUM_JOINTS]);
            for l in 0..NUM_LEGS {
                let v = row[6 + 2 * NUM_JOINTS + l];
                if v != 0.0 && v != 1.0 {
                    return Err(ClipError::InvalidClip(format!("frame {i}: contact flag {v} is not 0 or 1")));
                }
                f.contacts[l] = v == 1.0;
            }
            frames.push(f);
        }
        let clip = MotionClip {
            name: self.name,
            period: self.period_s,
            sample_rate: self.sample_rate_hz,
            root_displacement: self.root_displacement_m,
            frames,
        };
        clip.validate()?;
        Ok(clip)
    }
}

/// Builds a kinematically consistent clip from a gait spec.
pub fn generate_clip(spec: &GaitSpec, model: &RobotModel) -> Result<MotionClip, ClipError> {
    generate_clip_with_rate(spec, model, DEFAULT_FRAME_RATE)
}

pub fn generate_clip_with_rate(spec: &GaitSpec, model: &RobotModel, frame_rate: f64) -> Result<MotionClip, ClipError> {
    spec.validate()?;
    let period = spec.period();
    let n = ((period * frame_rate).round() as usize).max(2);
    let sample_rate = n as f64 / period;
    let dir = spec.direction as f64;
    let displacement = dir * spec.stride_length;
    let sweep = spec.stride_length * spec.duty_factor;
    let nominal_z = spec.leg_extension + model.foot_radius;
    let hop = HopProfile::new(spec, 9.81);

    let mut frames = Vec::with_capacity(n + 1);
    for k in 0..n {
        let phase = k as f64 / n as f64;
        let mut f = AgentState {
            x: displacement * phase,
            ..AgentState::default()
        };
        let (lift, in_stance) = match spec.family {
            GaitFamily::Hop => hop.body_offset(phase),
            _ => (0.0, true),
        };
        f.z = nominal_z + lift;
        for leg in 0..NUM_LEGS {
            let psi = (phase + spec.phase_offsets[leg]).rem_euclid(1.0);
            let (dx, foot_height, contact) = match spec.family {
                GaitFamily::Hop => {
                    // feet stay under the hips; in flight the legs keep the
                    // touchdown extension
                    let height = if in_stance { model.foot_radius } else { model.foot_radius + lift };
                    (0.0, height, in_stance)
                }
                _ => {
                    if psi < spec.duty_factor {
                        let s = psi / spec.duty_factor;
                        (dir * sweep * (0.5 - s), model.foot_radius, true)
                    } else {
                        let s = (psi - spec.duty_factor) / (1.0 - spec.duty_factor);
                        let dx = dir * sweep * (-0.5 + 0.5 * (1.0 - (std::f64::consts::PI * s).cos()));
                        let h = spec.step_height * (std::f64::consts::PI * s).sin();
                        (dx, model.foot_radius + h, false)
                    }
                }
            };
            let dz = foot_height - f.z;
            let (hip, knee) = model.leg_ik(leg, dx, dz).ok_or_else(|| ClipError::Infeasible {
                name: spec.name.clone(),
                phase,
                reason: format!("leg {leg} cannot reach ({dx:.3}, {dz:.3})"),
            })?;
            for (j, v) in [(2 * leg, hip), (2 * leg + 1, knee)] {
                let r = model.joint_range(j);
                if v < r.lower || v > r.upper {
                    return Err(ClipError::Infeasible {
                        name: spec.name.clone(),
                        phase,
                        reason: format!("joint {j} angle {v:.3} outside [{}, {}]", r.lower, r.upper),
                    });
                }
            }
            f.joint_pos[2 * leg] = hip;
            f.joint_pos[2 * leg + 1] = knee;
            f.contacts[leg] = contact;
        }
        frames.push(f);
    }

    // periodic central differences
    let h = period / n as f64;
    let velocities: Vec<_> = (0..n)
        .map(|k| {
            let next = &frames[(k + 1) % n];
            let prev = &frames[(k + n - 1) % n];
            let x_next = next.x + if k + 1 == n { displacement } else { 0.0 };
            let x_prev = prev.x - if k == 0 { displacement } else { 0.0 };
            let mut qd = [0.0; NUM_JOINTS];
            for j in 0..NUM_JOINTS {
                qd[j] = (next.joint_pos[j] - prev.joint_pos[j]) / (2.0 * h);
            }
            (
                (x_next - x_prev) / (2.0 * h),
                (next.z - prev.z) / (2.0 * h),
                angle_diff(next.pitch, prev.pitch) / (2.0 * h),
                qd,
            )
        })
        .collect();
    for (f, (vx, vz, w, qd)) in frames.iter_mut().zip(velocities) {
        f.vx = vx;
        f.vz = vz;
        f.pitch_rate = w;
        f.joint_vel = qd;
    }
    let mut closing = frames[0];
    closing.x += displacement;
    frames.push(closing);

    let clip = MotionClip {
        name: spec.name.clone(),
        period,
        sample_rate,
        root_displacement: displacement,
        frames,
    };
    clip.validate()?;
    Ok(clip)
}

/// Ballistic vertical body motion for a synchronous hop: the body follows a
/// half-cosine velocity reversal in stance and a parabola in flight.
struct HopProfile {
    duty: f64,
    stance_time: f64,
    flight_time: f64,
    takeoff_speed: f64,
    gravity: f64,
}

impl HopProfile {
    fn new(spec: &GaitSpec, gravity: f64) -> Self {
        let period = spec.period();
        let flight_time = period * (1.0 - spec.duty_factor);
        Self {
            duty: spec.duty_factor,
            stance_time: period * spec.duty_factor,
            flight_time,
            takeoff_speed: gravity * flight_time / 2.0,
            gravity,
        }
    }

    /// (height offset relative to touchdown, in stance)
    fn body_offset(&self, phase: f64) -> (f64, bool) {
        if phase < self.duty {
            let s = phase / self.duty;
            let depth = self.takeoff_speed * self.stance_time / std::f64::consts::PI;
            (-depth * (std::f64::consts::PI * s).sin(), true)
        } else {
            let tau = (phase - self.duty) / (1.0 - self.duty) * self.flight_time;
            (self.takeoff_speed * tau - 0.5 * self.gravity * tau * tau, false)
        }
    }
}

/// Half-open phase interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub start: f64,
    pub end: f64,
}

impl PhaseInterval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0.0
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.start && p < self.end
    }
}

/// How the target phase is picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSampling {
    /// Uniform over the whole cycle.
    Random,
    /// Uniform over a set of good phase intervals.
    Optimal,
}

/// Uniform phase over the union of `intervals`.
pub fn sample_phase<R: Rng + ?Sized>(
    mode: TargetSampling,
    intervals: &[PhaseInterval],
    rng: &mut R,
) -> Result<Phase, ClipError> {
    match mode {
        TargetSampling::Random => Ok(Phase::wrap(rng.random::<f64>())),
        TargetSampling::Optimal => {
            let total: f64 = intervals.iter().map(|i| i.len()).sum();
            if intervals.is_empty() || !(total > 0.0) {
                return Err(ClipError::EmptyIntervals);
            }
            let mut u = rng.random::<f64>() * total;
            for iv in intervals.iter().filter(|i| !i.is_empty()) {
                if u < iv.len() {
                    let p = iv.start + u;
                    // guard against rounding onto the open end
                    let p = if p >= iv.end { iv.start } else { p };
                    return Ok(Phase::wrap(p));
                }
                u -= iv.len();
            }
            let last = intervals.iter().rev().find(|i| !i.is_empty()).expect("non-empty union");
            Ok(Phase::wrap(last.start))
        }
    }
}

/// Draws a target phase and the corresponding target state (no contact flags).
pub fn sample_target<R: Rng + ?Sized>(
    clip: &MotionClip,
    mode: TargetSampling,
    intervals: &[PhaseInterval],
    rng: &mut R,
) -> Result<(Phase, TargetState), ClipError> {
    let phase = sample_phase(mode, intervals, rng)?;
    Ok((phase, TargetState::from(clip.sample_state(phase))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gait(name: &str) -> GaitSpec {
        default_gaits().into_iter().find(|g| g.name == name).unwrap()
    }

    #[test]
    fn all_default_gaits_generate() {
        let model = RobotModel::default();
        for g in default_gaits() {
            let c = generate_clip(&g, &model).unwrap();
            c.validate().unwrap();
            assert!((c.mean_velocity() - g.body_speed()).abs() < 1e-12);
        }
    }

    #[test]
    fn stand_is_static() {
        let model = RobotModel::default();
        let c = generate_clip(&gait("stand"), &model).unwrap();
        for f in &c.frames {
            assert_eq!(f.joint_pos, c.frames[0].joint_pos);
            assert_eq!(f.vx, 0.0);
            assert_eq!(f.vz, 0.0);
            assert!(f.joint_vel.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn hop_feet_are_synchronous() {
        let model = RobotModel::default();
        let c = generate_clip(&gait("hop"), &model).unwrap();
        let mut flight = 0;
        for f in &c.frames {
            assert!(f.contacts.iter().all(|x| *x == f.contacts[0]));
            if !f.contacts[0] {
                flight += 1;
            }
        }
        assert!(flight > 0);
    }

    #[test]
    fn walk_velocity_is_stride_times_frequency() {
        let model = RobotModel::default();
        let g = gait("walk-F");
        assert_eq!((g.frequency, g.stride_length), (1.5, 0.24));
        let c = generate_clip(&g, &model).unwrap();
        for f in &c.frames {
            assert!((f.vx - 0.36).abs() < 1e-6, "vx {}", f.vx);
        }
    }

    #[test]
    fn sampling_on_frames_and_midpoints() {
        let model = RobotModel::default();
        let c = generate_clip(&gait("trot-F"), &model).unwrap();
        let n = c.intervals();
        for k in 0..n {
            let p = Phase::new(k as f64 / n as f64).unwrap();
            assert_eq!(c.sample_state(p), c.frames[k]);
        }
        // midpoint oracle computed independently of sample_state
        let k = 5;
        let (a, b) = (&c.frames[k], &c.frames[k + 1]);
        let s = c.sample_state(Phase::new((k as f64 + 0.5) / n as f64).unwrap());
        assert!((s.z - 0.5 * (a.z + b.z)).abs() < 1e-12);
        assert!((s.vx - 0.5 * (a.vx + b.vx)).abs() < 1e-12);
        for j in 0..NUM_JOINTS {
            assert!((s.joint_pos[j] - 0.5 * (a.joint_pos[j] + b.joint_pos[j])).abs() < 1e-12);
            assert!((s.joint_vel[j] - 0.5 * (a.joint_vel[j] + b.joint_vel[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_closure() {
        let model = RobotModel::default();
        for g in default_gaits() {
            let c = generate_clip(&g, &model).unwrap();
            let a = c.sample_state(Phase::ZERO);
            let b = c.sample_state(Phase::new(1.0 - 1e-9).unwrap());
            for j in 0..NUM_JOINTS {
                assert!((a.joint_pos[j] - b.joint_pos[j]).abs() < 1e-6);
            }
            assert!((a.z - b.z).abs() < 1e-6);
            assert!((b.x - a.x - c.root_displacement).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_spec_rejected() {
        let model = RobotModel::default();
        let mut g = gait("walk-F");
        g.stride_length = 1.2;
        assert!(matches!(generate_clip(&g, &model), Err(ClipError::Infeasible { .. })));
        let mut g = gait("walk-F");
        g.duty_factor = 0.0;
        assert!(matches!(generate_clip(&g, &model), Err(ClipError::InvalidSpec(_))));
    }

    #[test]
    fn optimal_sampling_respects_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let iv = [PhaseInterval::new(0.2, 0.4)];
        for _ in 0..10_000 {
            let p = sample_phase(TargetSampling::Optimal, &iv, &mut rng).unwrap().value();
            assert!((0.2..0.4).contains(&p));
        }
        assert!(matches!(
            sample_phase(TargetSampling::Optimal, &[], &mut rng),
            Err(ClipError::EmptyIntervals)
        ));
    }

    #[test]
    fn random_sampling_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let mut bins = [0usize; 10];
        for _ in 0..n {
            let p = sample_phase(TargetSampling::Random, &[], &mut rng).unwrap().value();
            bins[(p * 10.0) as usize] += 1;
        }
        for b in bins {
            let frac = b as f64 / n as f64;
            assert!((frac - 0.1).abs() < 0.001, "decile fraction {frac}");
        }
    }

    #[test]
    fn file_roundtrip_is_exact() {
        let model = RobotModel::default();
        let c = generate_clip(&gait("hop"), &model).unwrap();
        let text = c.to_toml_string();
        assert!(text.contains("schema_version = 1"));
        let back = MotionClip::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
