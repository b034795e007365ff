//! Reduced-coordinate planar dynamics.
//!
//! Generalized coordinates are `[x, z, pitch, hip0, knee0, .., hip3, knee3]`.
//! Each physics step is a semi-implicit Euler step written in momentum form:
//! the generalized momentum `p = M(q) v` is advanced with the forces evaluated
//! at the start of the step, positions move with the mid velocity, and the new
//! velocity is recovered from `M(q_next)`. Because `x` and `z` are cyclic,
//! the base rows of `p` (the total linear momentum) only change under gravity
//! and contact, which makes the scheme conserve linear momentum to round-off
//! when both are disabled.
//!
//! PD drives and contact springs/dampers are treated implicitly in the new
//! velocity; torque saturation, unilateral normal forces and the Coulomb cap
//! are resolved by re-solving with the offending elements switched to constant
//! forces.

use nalgebra::{SMatrix, SVector};

use super::model::{ContactParams, RobotModel};
use super::randomization::{EpisodeParams, NUM_BODIES};
use super::state::{AgentState, NUM_DOF, NUM_JOINTS, NUM_LEGS};

pub type Mat = SMatrix<f64, NUM_DOF, NUM_DOF>;
pub type Vector = SVector<f64, NUM_DOF>;

const MAX_ELEMENT_ITERS: usize = 8;

/// Mass properties after per-episode scaling.
#[derive(Debug, Clone, Copy)]
pub struct BodyParams {
    pub mass: [f64; NUM_BODIES],
    pub inertia: [f64; NUM_BODIES],
    pub armature: f64,
}

impl BodyParams {
    pub fn new(model: &RobotModel, mass_scale: &[f64; NUM_BODIES]) -> Self {
        let mut mass = [0.0; NUM_BODIES];
        let mut inertia = [0.0; NUM_BODIES];
        mass[0] = model.torso_mass * mass_scale[0];
        inertia[0] = model.torso_inertia * mass_scale[0];
        for (i, leg) in model.legs.iter().enumerate() {
            let (t, c) = (1 + 2 * i, 2 + 2 * i);
            mass[t] = leg.thigh_mass * mass_scale[t];
            inertia[t] = mass[t] * leg.thigh_length * leg.thigh_length / 12.0;
            mass[c] = leg.calf_mass * mass_scale[c];
            inertia[c] = mass[c] * leg.calf_length * leg.calf_length / 12.0;
        }
        Self {
            mass,
            inertia,
            armature: model.armature,
        }
    }
}

/// One `c * (sin psi, -cos psi)` term of a point's position. `level` says
/// which angles sum into `psi`: 0 pitch only, 1 pitch + hip, 2 pitch + hip + knee.
#[derive(Debug, Clone, Copy)]
struct Term {
    c: f64,
    psi: f64,
    level: u8,
}

/// Position and Jacobian of a point on the articulated body.
#[derive(Debug, Clone, Copy)]
pub struct PointJacobian {
    pub pos: [f64; 2],
    /// Rows are the x and z velocity components.
    pub jac: [[f64; NUM_DOF]; 2],
}

impl PointJacobian {
    pub fn velocity(&self, v: &[f64; NUM_DOF]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (r, row) in self.jac.iter().enumerate() {
            out[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }
}

fn hip_index(leg: usize) -> usize {
    3 + 2 * leg
}

fn knee_index(leg: usize) -> usize {
    4 + 2 * leg
}

fn point(q: &[f64; NUM_DOF], leg: usize, terms: &[Term]) -> PointJacobian {
    let mut pos = [q[0], q[1]];
    let mut jac = [[0.0; NUM_DOF]; 2];
    jac[0][0] = 1.0;
    jac[1][1] = 1.0;
    for t in terms {
        let (s, c) = t.psi.sin_cos();
        pos[0] += t.c * s;
        pos[1] -= t.c * c;
        let d = [t.c * c, t.c * s];
        for r in 0..2 {
            jac[r][2] += d[r];
            if t.level >= 1 {
                jac[r][hip_index(leg)] += d[r];
            }
            if t.level >= 2 {
                jac[r][knee_index(leg)] += d[r];
            }
        }
    }
    PointJacobian { pos, jac }
}

/// `d(J v)/dq_k` for the same terms, needed for the kinetic-energy gradient.
fn velocity_partials(q: &[f64; NUM_DOF], v: &[f64; NUM_DOF], leg: usize, terms: &[Term]) -> [[f64; NUM_DOF]; 2] {
    let _ = q;
    let rate = [
        v[2],
        v[2] + v[hip_index(leg)],
        v[2] + v[hip_index(leg)] + v[knee_index(leg)],
    ];
    let mut out = [[0.0; NUM_DOF]; 2];
    for t in terms {
        let (s, c) = t.psi.sin_cos();
        let w = rate[t.level as usize];
        let d = [-t.c * s * w, t.c * c * w];
        for r in 0..2 {
            out[r][2] += d[r];
            if t.level >= 1 {
                out[r][hip_index(leg)] += d[r];
            }
            if t.level >= 2 {
                out[r][knee_index(leg)] += d[r];
            }
        }
    }
    out
}

/// Term lists for the points of one leg.
struct LegTerms {
    hip: [Term; 1],
    thigh_com: [Term; 2],
    knee: [Term; 2],
    calf_com: [Term; 3],
    foot: [Term; 3],
}

fn leg_terms(model: &RobotModel, q: &[f64; NUM_DOF], leg: usize) -> LegTerms {
    let g = &model.legs[leg];
    let pitch = q[2];
    let thigh = pitch + q[hip_index(leg)];
    let calf = thigh + q[knee_index(leg)];
    let hip = Term {
        c: g.hip_x,
        psi: pitch + std::f64::consts::FRAC_PI_2,
        level: 0,
    };
    let t_half = Term { c: 0.5 * g.thigh_length, psi: thigh, level: 1 };
    let t_full = Term { c: g.thigh_length, psi: thigh, level: 1 };
    let c_half = Term { c: 0.5 * g.calf_length, psi: calf, level: 2 };
    let c_full = Term { c: g.calf_length, psi: calf, level: 2 };
    LegTerms {
        hip: [hip],
        thigh_com: [hip, t_half],
        knee: [hip, t_full],
        calf_com: [hip, t_full, c_half],
        foot: [hip, t_full, c_full],
    }
}

/// World positions of the points used for collision checks.
#[derive(Debug, Clone, Copy)]
pub struct CollisionPoints {
    pub torso_corners: [[f64; 2]; 4],
    pub hips: [[f64; 2]; NUM_LEGS],
    pub knees: [[f64; 2]; NUM_LEGS],
    pub feet: [[f64; 2]; NUM_LEGS],
}

pub fn collision_points(model: &RobotModel, q: &[f64; NUM_DOF]) -> CollisionPoints {
    let (s, c) = q[2].sin_cos();
    let mut torso_corners = [[0.0; 2]; 4];
    let corners = [
        (model.torso_half_length, model.torso_half_height),
        (model.torso_half_length, -model.torso_half_height),
        (-model.torso_half_length, model.torso_half_height),
        (-model.torso_half_length, -model.torso_half_height),
    ];
    for (k, (lx, lz)) in corners.iter().enumerate() {
        torso_corners[k] = [q[0] + lx * c - lz * s, q[1] + lx * s + lz * c];
    }
    let mut hips = [[0.0; 2]; NUM_LEGS];
    let mut knees = [[0.0; 2]; NUM_LEGS];
    let mut feet = [[0.0; 2]; NUM_LEGS];
    for leg in 0..NUM_LEGS {
        let t = leg_terms(model, q, leg);
        hips[leg] = point(q, leg, &t.hip).pos;
        knees[leg] = point(q, leg, &t.knee).pos;
        feet[leg] = point(q, leg, &t.foot).pos;
    }
    CollisionPoints {
        torso_corners,
        hips,
        knees,
        feet,
    }
}

const NUM_CONTACTS: usize = 3 * NUM_LEGS;

/// Every point that can touch the ground with its contact radius: feet first,
/// then knees, then the four torso corners.
fn contact_points(model: &RobotModel, q: &[f64; NUM_DOF]) -> [(PointJacobian, f64); NUM_CONTACTS] {
    let pitch = q[2];
    let corners = [
        (model.torso_half_length, model.torso_half_height),
        (model.torso_half_length, -model.torso_half_height),
        (-model.torso_half_length, model.torso_half_height),
        (-model.torso_half_length, -model.torso_half_height),
    ];
    std::array::from_fn(|k| {
        let leg = k % NUM_LEGS;
        match k / NUM_LEGS {
            0 => (point(q, leg, &leg_terms(model, q, leg).foot), model.foot_radius),
            1 => (point(q, leg, &leg_terms(model, q, leg).knee), model.knee_radius),
            _ => {
                let (lx, lz) = corners[leg];
                let terms = [
                    Term { c: lx, psi: pitch + std::f64::consts::FRAC_PI_2, level: 0 },
                    Term { c: lz, psi: pitch + std::f64::consts::PI, level: 0 },
                ];
                (point(q, 0, &terms), 0.0)
            }
        }
    })
}

/// Foot position and Jacobian for every leg.
pub fn foot_jacobians(model: &RobotModel, q: &[f64; NUM_DOF]) -> [PointJacobian; NUM_LEGS] {
    std::array::from_fn(|leg| point(q, leg, &leg_terms(model, q, leg).foot))
}

fn add_outer(m: &mut Mat, row: &[f64; NUM_DOF], w: f64) {
    for i in 0..NUM_DOF {
        let ri = row[i];
        if ri == 0.0 {
            continue;
        }
        for j in 0..NUM_DOF {
            m[(i, j)] += w * ri * row[j];
        }
    }
}

/// Angular Jacobian of body `b` is the sum of these unit columns.
fn angular_columns(b: usize) -> (usize, Option<usize>, Option<usize>) {
    if b == 0 {
        return (2, None, None);
    }
    let leg = (b - 1) / 2;
    if (b - 1) % 2 == 0 {
        (2, Some(hip_index(leg)), None)
    } else {
        (2, Some(hip_index(leg)), Some(knee_index(leg)))
    }
}

/// Dynamics quantities at a configuration.
pub struct Assembled {
    pub mass: Mat,
    /// Kinetic-energy gradient dT/dq at the given velocity.
    pub dtdq: Vector,
    /// Gravity generalized force.
    pub gravity: Vector,
}

fn body_points(model: &RobotModel, q: &[f64; NUM_DOF]) -> [(PointJacobian, usize, LegTerms); NUM_LEGS] {
    std::array::from_fn(|leg| {
        let t = leg_terms(model, q, leg);
        (point(q, leg, &t.thigh_com), leg, t)
    })
}

/// Mass matrix plus, when `v` is given, the velocity-dependent terms.
pub fn assemble(model: &RobotModel, body: &BodyParams, gravity: f64, q: &[f64; NUM_DOF], v: Option<&[f64; NUM_DOF]>) -> Assembled {
    let mut mass = Mat::zeros();
    let mut dtdq = Vector::zeros();
    let mut grav = Vector::zeros();

    // torso
    mass[(0, 0)] += body.mass[0];
    mass[(1, 1)] += body.mass[0];
    mass[(2, 2)] += body.inertia[0];
    grav[1] -= body.mass[0] * gravity;

    for (thigh_pt, leg, terms) in body_points(model, q).iter() {
        let calf_pt = point(q, *leg, &terms.calf_com);
        for (b, pj, tl) in [
            (1 + 2 * leg, thigh_pt, &terms.thigh_com[..]),
            (2 + 2 * leg, &calf_pt, &terms.calf_com[..]),
        ] {
            let m = body.mass[b];
            add_outer(&mut mass, &pj.jac[0], m);
            add_outer(&mut mass, &pj.jac[1], m);
            let (a0, a1, a2) = angular_columns(b);
            let mut ang = [0.0; NUM_DOF];
            ang[a0] = 1.0;
            if let Some(i) = a1 {
                ang[i] = 1.0;
            }
            if let Some(i) = a2 {
                ang[i] = 1.0;
            }
            add_outer(&mut mass, &ang, body.inertia[b]);
            for k in 0..NUM_DOF {
                grav[k] -= m * gravity * pj.jac[1][k];
            }
            if let Some(v) = v {
                let vel = pj.velocity(v);
                let dv = velocity_partials(q, v, *leg, tl);
                for k in 0..NUM_DOF {
                    dtdq[k] += m * (vel[0] * dv[0][k] + vel[1] * dv[1][k]);
                }
            }
        }
    }
    for j in 3..NUM_DOF {
        mass[(j, j)] += body.armature;
    }
    Assembled {
        mass,
        dtdq,
        gravity: grav,
    }
}

/// Per-control-step diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepInfo {
    /// Torques applied during the last physics sub-step.
    pub torques: [f64; NUM_JOINTS],
    /// Mean over sub-steps of each squared joint torque.
    pub mean_sq_torques: [f64; NUM_JOINTS],
    /// Largest foot penetration depth seen during the step (m).
    pub max_penetration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Drive {
    Linear,
    Saturated(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FootMode {
    Free,
    Stick,
    Slide(f64),
}

/// Everything the integrator needs besides the state.
pub struct StepContext<'a> {
    pub model: &'a RobotModel,
    pub contact: &'a ContactParams,
    pub body: &'a BodyParams,
    pub params: &'a EpisodeParams,
    pub gravity: f64,
    pub dt: f64,
}

/// Advances `(q, v)` by one physics step with constant joint targets. Returns
/// the applied torques and the maximum penetration.
pub fn physics_step(
    ctx: &StepContext<'_>,
    q: &mut [f64; NUM_DOF],
    v: &mut [f64; NUM_DOF],
    targets: &[f64; NUM_JOINTS],
) -> ([f64; NUM_JOINTS], f64) {
    let dt = ctx.dt;
    let asm = assemble(ctx.model, ctx.body, ctx.gravity, q, Some(v));
    let feet = contact_points(ctx.model, q);
    let vvec = Vector::from_row_slice(v);
    let momentum = asm.mass * vvec;

    let kp = ctx.params.kp;
    let kd = ctx.params.kd;
    let limit = ctx.model.torque_limit;
    let k_n = ctx.contact.stiffness;
    let c_n = ctx.contact.damping + dt * k_n;
    let c_t = ctx.contact.tangential_damping;
    let mu = ctx.params.friction;

    let mut drives = [Drive::Linear; NUM_JOINTS];
    let mut modes = [FootMode::Free; NUM_CONTACTS];
    let mut penetration = [0.0; NUM_CONTACTS];
    let mut max_pen: f64 = 0.0;
    for (k, (f, radius)) in feet.iter().enumerate() {
        let d = radius - f.pos[1];
        if d > 0.0 {
            penetration[k] = d;
            if k < NUM_LEGS {
                max_pen = max_pen.max(d);
            }
            modes[k] = FootMode::Stick;
        }
    }

    let base_force = asm.dtdq + asm.gravity;
    let mut v_mid = vvec;
    let mut torques = [0.0; NUM_JOINTS];
    let mut normal = [0.0; NUM_CONTACTS];

    for _ in 0..MAX_ELEMENT_ITERS {
        let mut a = asm.mass;
        let mut rhs = momentum + dt * base_force;
        for j in 0..NUM_JOINTS {
            let idx = 3 + j;
            match drives[j] {
                Drive::Linear => {
                    a[(idx, idx)] += dt * (kd + dt * kp);
                    rhs[idx] += dt * kp * (targets[j] - q[idx]);
                }
                Drive::Saturated(tau) => rhs[idx] += dt * tau,
            }
        }
        for leg in 0..NUM_CONTACTS {
            let f = &feet[leg].0;
            match modes[leg] {
                FootMode::Free => {}
                FootMode::Stick | FootMode::Slide(_) => {
                    add_outer(&mut a, &f.jac[1], dt * c_n);
                    for k in 0..NUM_DOF {
                        rhs[k] += dt * k_n * penetration[leg] * f.jac[1][k];
                    }
                    if let FootMode::Slide(ft) = modes[leg] {
                        for k in 0..NUM_DOF {
                            rhs[k] += dt * ft * f.jac[0][k];
                        }
                    } else {
                        add_outer(&mut a, &f.jac[0], dt * c_t);
                    }
                }
            }
        }
        v_mid = match a.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => a.lu().solve(&rhs).unwrap_or(vvec),
        };
        let vm: [f64; NUM_DOF] = v_mid.into();

        let mut changed = false;
        for j in 0..NUM_JOINTS {
            let idx = 3 + j;
            let linear = kp * (targets[j] - q[idx] - dt * vm[idx]) - kd * vm[idx];
            match drives[j] {
                Drive::Linear => {
                    if linear.abs() > limit {
                        drives[j] = Drive::Saturated(limit.copysign(linear));
                        changed = true;
                    } else {
                        torques[j] = linear;
                    }
                }
                Drive::Saturated(tau) => {
                    if linear.abs() < limit {
                        drives[j] = Drive::Linear;
                        changed = true;
                    } else {
                        torques[j] = tau;
                    }
                }
            }
        }
        for leg in 0..NUM_CONTACTS {
            if modes[leg] == FootMode::Free {
                normal[leg] = 0.0;
                continue;
            }
            let fv = feet[leg].0.velocity(&vm);
            let fn_ = k_n * penetration[leg] - c_n * fv[1];
            if fn_ <= 0.0 {
                modes[leg] = FootMode::Free;
                normal[leg] = 0.0;
                changed = true;
                continue;
            }
            normal[leg] = fn_;
            let cap = mu * fn_;
            match modes[leg] {
                FootMode::Stick => {
                    let ft = -c_t * fv[0];
                    if ft.abs() > cap {
                        modes[leg] = FootMode::Slide(cap.copysign(ft));
                        changed = true;
                    }
                }
                FootMode::Slide(ft) => {
                    let updated = cap.copysign(ft);
                    if ft * fv[0] > 0.0 {
                        // friction would be accelerating the foot: stick instead
                        modes[leg] = FootMode::Stick;
                        changed = true;
                    } else if (updated - ft).abs() > 1e-9 * (1.0 + cap) {
                        modes[leg] = FootMode::Slide(updated);
                        changed = true;
                    }
                }
                FootMode::Free => unreachable!(),
            }
        }
        if !changed {
            break;
        }
    }

    let new_momentum = asm.mass * v_mid;
    for k in 0..NUM_DOF {
        q[k] += dt * v_mid[k];
    }

    let mut limited = [false; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let r = ctx.model.joint_range(j);
        let idx = 3 + j;
        if q[idx] < r.lower {
            q[idx] = r.lower;
            limited[j] = true;
        } else if q[idx] > r.upper {
            q[idx] = r.upper;
            limited[j] = true;
        }
    }

    let m_next = assemble(ctx.model, ctx.body, ctx.gravity, q, None).mass;
    let chol = m_next.cholesky();
    let solve = |rhs: &Vector| -> Vector {
        match &chol {
            Some(ch) => ch.solve(rhs),
            None => m_next.lu().solve(rhs).unwrap_or(*rhs),
        }
    };
    let mut p = new_momentum;
    let mut v_next = solve(&p);
    if limited.iter().any(|l| *l) {
        // Inelastic joint stops: a generalized impulse on the joint axis
        // removes the outward velocity without touching the base momentum.
        for _ in 0..2 {
            for j in 0..NUM_JOINTS {
                if !limited[j] {
                    continue;
                }
                let idx = 3 + j;
                let r = ctx.model.joint_range(j);
                let outward = (q[idx] <= r.lower && v_next[idx] < 0.0) || (q[idx] >= r.upper && v_next[idx] > 0.0);
                if !outward {
                    continue;
                }
                let mut e = Vector::zeros();
                e[idx] = 1.0;
                let col = solve(&e);
                let lambda = -v_next[idx] / col[idx];
                p[idx] += lambda;
                v_next += col * lambda;
            }
        }
    }
    *v = v_next.into();
    (torques, max_pen)
}

/// Linear momentum of the articulated system, `sum m_b v_b`.
pub fn linear_momentum(model: &RobotModel, body: &BodyParams, q: &[f64; NUM_DOF], v: &[f64; NUM_DOF]) -> [f64; 2] {
    let mut p = [body.mass[0] * v[0], body.mass[0] * v[1]];
    for leg in 0..NUM_LEGS {
        let t = leg_terms(model, q, leg);
        for (b, terms) in [(1 + 2 * leg, &t.thigh_com[..]), (2 + 2 * leg, &t.calf_com[..])] {
            let vel = point(q, leg, terms).velocity(v);
            p[0] += body.mass[b] * vel[0];
            p[1] += body.mass[b] * vel[1];
        }
    }
    p
}

/// Contact flags from the foot-ground penetration test.
pub fn contact_flags(model: &RobotModel, q: &[f64; NUM_DOF]) -> [bool; NUM_LEGS] {
    let feet = collision_points(model, q).feet;
    std::array::from_fn(|leg| feet[leg][1] < model.foot_radius)
}

/// Rebuilds an [`AgentState`] with contact flags computed from the geometry.
pub fn state_from(model: &RobotModel, q: &[f64; NUM_DOF], v: &[f64; NUM_DOF]) -> AgentState {
    AgentState::from_generalized(q, v, contact_flags(model, q))
}
