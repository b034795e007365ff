//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails.
//!
//! The algorithmic checks run from scratch. The expert, composer, duration,
//! preservation and PCA checks read trained artifacts and the benchmark
//! summary from `$ECP_ARTIFACTS` (default: `artifacts/` at the workspace
//! root), produced by `ecp pipeline`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use ecp_core::approx::policy::{surrogate_loss_and_grad, value_loss_and_grad, LossBatch};
use ecp_core::approx::{Env, Learner, Mlp, PolicyNet, PpoConfig, RunningNorm, Transition, ValueNet, VecCollector};
use ecp_core::clips::PhaseInterval;
use ecp_core::composer::{
    anneal_tolerance, boundary_indicator, composer_reward, ToleranceGroup, ToleranceSchedule, TransitionContext,
    BETA_INSIDE, BETA_SUCCESS, BETA_VIOLATION,
};
use ecp_core::error::TrainingError;
use ecp_core::evalbench::pca::pca;
use ecp_core::evalbench::stats::CellStats;
use ecp_core::evalbench::Strategy;
use ecp_core::experts::ExpertConfig;
use ecp_core::pipeline::{evaluate_stored_experts, ArtifactStore, BenchSummary, EXPANSION_SKILLS, TRAINING_SKILLS};
use ecp_core::simcore::{standing_state, ActionCommand, AgentState, EpisodeParams, SimConfig, Simulator, TargetState};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn store() -> ArtifactStore {
    match std::env::var_os("ECP_ARTIFACTS") {
        Some(p) => ArtifactStore::new(p),
        None => {
            let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../artifacts");
            ArtifactStore::new(p.canonicalize().unwrap_or(p))
        }
    }
}

fn summary() -> Result<BenchSummary, String> {
    let path = store().summary_path();
    if !path.is_file() {
        return Err(format!("{} not found; run `ecp pipeline` first", path.display()));
    }
    BenchSummary::load(&path).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- schedule

fn schedule() -> Outcome {
    let start = Instant::now();
    let s = ToleranceSchedule::default();
    let table = [
        (ToleranceGroup::ComHeight, 2.0, 0.35, 0.02),
        (ToleranceGroup::Orientation, 4.0, 1.0, 0.2),
        (ToleranceGroup::LinearVelocity, 8.0, 2.5, 0.2),
        (ToleranceGroup::AngularVelocity, 8.0, 15.0, 0.2),
        (ToleranceGroup::JointAngles, 2.0, 3.14, 0.5),
    ];
    let mut worst: f64 = 0.0;
    for (g, p, ss, se) in table {
        let row = s.group(g);
        ensure((row.exponent, row.sigma_start, row.sigma_end) == (p, ss, se), || format!("{g:?} row differs"))?;
        ensure(anneal_tolerance(g, 0.0, &s) == ss, || format!("{g:?}: sigma(0) != sigma_s"))?;
        ensure(anneal_tolerance(g, 1.0, &s) == se, || format!("{g:?}: sigma(1) != sigma_e"))?;
        let direct = ss + 0.5f64.powf(p) * (se - ss);
        worst = worst.max((anneal_tolerance(g, 0.5, &s) - direct).abs());
    }
    ensure(worst <= 1e-12, || format!("midpoint error {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("5 rows, endpoints exact, midpoint error {worst:.1e}"))
}

// -------------------------------------------------------------- truth table

fn as_agent(t: &TargetState) -> AgentState {
    AgentState {
        x: 0.0,
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

fn truth_table() -> Outcome {
    let start = Instant::now();
    let s = ToleranceSchedule::default();
    let target = TargetState {
        z: 0.28,
        pitch: 0.0,
        vx: 0.5,
        vz: 0.0,
        pitch_rate: 0.0,
        joint_pos: [-0.6, 1.2, -0.6, 1.2, -0.6, 1.2, -0.6, 1.2],
        joint_vel: [0.0; 8],
    };
    let mut s0 = target;
    s0.vx = -0.5;
    // at t = 0.5 the centre has vx = 0 and the velocity band is
    // 2.5 + 0.5^8 (0.2 - 2.5) = 2.491015625
    let ctx = TransitionContext { s0, target, t: 0.5 };
    let mut state = ctx.center();
    let cases = [
        // 0.01 from the target in height, all else exact: within sigma_e
        ({
            let mut x = target;
            x.z += 0.01;
            x
        }, BETA_SUCCESS),
        ({
            state.vx = 2.4;
            state
        }, BETA_INSIDE),
        ({
            state.vx = 2.5;
            state
        }, BETA_VIOLATION),
        // far outside the band around the centre, yet at the target
        (target, BETA_SUCCESS),
    ];
    let far = TransitionContext {
        s0: TargetState { z: 2.0, ..target },
        target,
        t: 0.0,
    };
    for (k, (x, want)) in cases.iter().enumerate() {
        let c = if k == 3 { &far } else { &ctx };
        let got = boundary_indicator(&as_agent(x), c, &s);
        ensure(got == *want, || format!("case {k}: beta {got}, expected {want}"))?;
    }
    let r = composer_reward(BETA_INSIDE, &[10.0; 8], 0.0001);
    ensure((r - 0.92).abs() < 1e-12, || format!("R = {r}, expected 1 - 0.0001 * 800 = 0.92"))?;
    let r = composer_reward(BETA_SUCCESS, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0], 0.0001);
    ensure((r - (100.0 - 0.0014)).abs() < 1e-12, || format!("R = {r}, expected 99.9986"))?;
    let r = composer_reward(BETA_VIOLATION, &[0.0; 8], 0.0001);
    ensure(r == -1.0, || format!("R = {r}, expected -1"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok("3 branches, success precedence, R = 0.92 / 99.9986 / -1".into())
}

// --------------------------------------------------------------------- PPO

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn fd_worst(base: Vec<f64>, analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += h;
        let up = loss(&p);
        p[i] -= 2.0 * h;
        let down = loss(&p);
        worst = worst.max(rel_err((up - down) / (2.0 * h), analytic[i]));
    }
    worst
}

struct Bandit;

impl Env for Bandit {
    fn obs_dim(&self) -> usize {
        1
    }
    fn act_dim(&self) -> usize {
        1
    }
    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![1.0]
    }
    fn step(&mut self, action: &[f64], _rng: &mut ChaCha8Rng) -> Result<Transition, TrainingError> {
        let good = action[0] > 0.0;
        Ok(Transition {
            obs: vec![1.0],
            reward: if good { 1.0 } else { 0.0 },
            terminal: true,
            truncated: false,
            success: good,
        })
    }
}

/// P(action > 0) for a Gaussian policy from the normal CDF (erfc series).
fn p_positive(mean: f64, std: f64) -> f64 {
    let z = mean / std / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * z.abs());
    let poly = t * (0.254_829_592 + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erf = 1.0 - poly * (-z * z).exp();
    0.5 * (1.0 + erf.copysign(z))
}

fn ppo() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut policy = PolicyNet::<f64>::new(3, &[4], 2, &mut rng);
    policy.mean = Mlp::random(&[3, 4, 2], 1.0, &mut rng);
    policy.log_std = Array1::from(vec![-0.3, 0.2]);
    let obs = Array2::from_shape_fn((16, 3), |_| rng.random_range(-1.0..1.0));
    let act = Array2::from_shape_fn((16, 2), |_| rng.random_range(-0.5..0.5));
    let olp: Vec<f64> = (0..16).map(|_| rng.random_range(-1.5..0.5)).collect();
    let adv: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
    let ret: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = LossBatch {
        obs: obs.view(),
        actions: act.view(),
        old_log_probs: &olp,
        advantages: &adv,
        returns: &ret,
    };
    let g = surrogate_loss_and_grad(&policy, &batch, 0.2, 0.01).1.flat();
    let pol_err = fd_worst(policy.flat_params(), &g, |p| {
        let mut q = policy.clone();
        q.set_flat_params(p);
        surrogate_loss_and_grad(&q, &batch, 0.2, 0.01).0.loss
    });
    let value = ValueNet::<f64> {
        net: Mlp::random(&[3, 5, 1], 1.0, &mut rng),
    };
    let g = value_loss_and_grad(&value, obs.view(), &ret).1.flat_params();
    let val_err = fd_worst(value.net.flat_params(), &g, |p| {
        let mut v = value.clone();
        v.net.set_flat_params(p);
        value_loss_and_grad(&v, obs.view(), &ret).0
    });
    ensure(pol_err <= 1e-4 && val_err <= 1e-4, || {
        format!("finite-difference relative error policy {pol_err:e}, value {val_err:e}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut learner = Learner::new(PolicyNet::<f32>::new(1, &[8], 1, &mut rng), ValueNet::<f32>::new(1, &[8], &mut rng));
    let mut norm = RunningNorm::new(1);
    let cfg = PpoConfig {
        learning_rate: 3e-3,
        final_lr_fraction: 1.0,
        minibatch_size: 32,
        ..PpoConfig::default()
    };
    let mut collector = VecCollector::new((0..8).map(|_| Bandit).collect(), 3);
    let mut p_opt = 0.0;
    let mut updates = 0;
    while updates < 500 && p_opt <= 0.99 {
        let c = collector
            .collect(&learner.policy, &learner.value, &mut norm, 8, cfg.gamma, cfg.lambda)
            .map_err(|e| e.to_string())?;
        learner.update(&c.batch, &cfg, cfg.lr_at(updates, 500), updates, &mut rng).map_err(|e| e.to_string())?;
        updates += 1;
        let x = Array2::from_shape_vec((1, 1), norm.normalize(&[1.0])).expect("1x1");
        p_opt = p_positive(learner.policy.forward(x.view())[[0, 0]] as f64, learner.policy.std()[0]);
    }
    ensure(p_opt > 0.99, || format!("bandit P(optimal) {p_opt:.4} after {updates} updates"))?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "fd error policy {pol_err:.1e} value {val_err:.1e}; bandit P(optimal) {p_opt:.4} after {updates} updates"
    ))
}

// ----------------------------------------------------------------- physics

fn physics() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::default();
    let nominal = EpisodeParams::nominal(&cfg.model, &cfg.contact);

    let mut sim = Simulator::new(cfg.clone());
    let mut s = standing_state(&cfg.model, 0.28);
    s.z = 10.0;
    sim.reset(s, nominal.clone());
    let hold = ActionCommand::new(s.joint_pos);
    for _ in 0..30 {
        sim.step(&hold).map_err(|e| e.to_string())?;
    }
    let t = sim.sim_time();
    let expected = 0.5 * cfg.gravity * t * t;
    let fall_err = ((10.0 - sim.state().z) - expected).abs() / expected;
    ensure(fall_err < 0.01, || format!("free fall off by {:.3}%", 100.0 * fall_err))?;

    let mut free = cfg.clone();
    free.gravity = 0.0;
    let mut sim = Simulator::new(free.clone());
    let mut s = standing_state(&free.model, 0.28);
    s.z = 5.0;
    s.vx = 0.7;
    s.vz = -0.3;
    s.pitch_rate = 1.5;
    s.joint_vel = [2.0, -1.0, 0.5, 1.5, -2.0, 0.3, 1.0, -0.4];
    sim.reset(s, nominal.clone());
    let p0 = sim.linear_momentum();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let steps_per_control = free.clock.decimation as usize;
    for _ in 0..1000 / steps_per_control {
        let mut targets = s.joint_pos;
        for x in targets.iter_mut() {
            *x += rng.random_range(-0.4..0.4);
        }
        sim.step(&ActionCommand::new(targets)).map_err(|e| e.to_string())?;
    }
    let p1 = sim.linear_momentum();
    let drift = ((p1[0] - p0[0]).hypot(p1[1] - p0[1])) / p0[0].hypot(p0[1]);
    ensure(drift <= 1e-6, || format!("momentum drift {drift:e} per 1000 steps"))?;

    let run = |seed: u64| -> Result<Vec<u64>, String> {
        let rand = cfg.randomization.expert;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sim = Simulator::new(cfg.clone());
        let s = standing_state(&cfg.model, 0.28);
        sim.reset(s, rand.sample_episode(&mut rng));
        let mut bits = Vec::new();
        for k in 0..90 {
            let mut targets = s.joint_pos;
            targets[0] += 0.3 * (k as f64 * 0.3).sin();
            let cmd = rand.perturb_action(&ActionCommand::new(targets), &mut rng);
            let st = sim.step(&cmd).map_err(|e| e.to_string())?;
            bits.extend(st.positions().iter().chain(st.velocities().iter()).map(|v| v.to_bits()));
        }
        Ok(bits)
    };
    ensure(run(42)? == run(42)?, || "seeded runs differ".into())?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("free fall error {:.4}%, momentum drift {drift:.1e}, bitwise deterministic", 100.0 * fall_err))
}

// ----------------------------------------------------------------- experts

fn experts() -> Outcome {
    let store = store();
    let sim = SimConfig::default();
    let cfg = ExpertConfig::default();
    let mut lines = Vec::new();
    let mut bad = Vec::new();
    // fresh seeds, so this is not the training-time evaluation repeated
    let evals = evaluate_stored_experts(&store, &sim, &cfg, 100, 0x0acc_e97).map_err(|e| e.to_string())?;
    for (name, e) in &evals {
        lines.push(format!("{name} {}/{} r={:.3}", e.survived, e.episodes, e.mean_imitation_reward));
        if e.episodes != 100 || e.survival_rate() < 0.95 || e.mean_imitation_reward < cfg.reward_threshold {
            bad.push(name.clone());
        }
    }
    ensure(evals.len() == 6, || format!("{} experts evaluated", evals.len()))?;
    ensure(bad.is_empty(), || format!("below threshold: {} ({})", bad.join(", "), lines.join("; ")))?;
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------- composer

fn is_training(c: &CellStats) -> bool {
    TRAINING_SKILLS.contains(&c.source.as_str()) && TRAINING_SKILLS.contains(&c.target.as_str())
}

fn composer() -> Outcome {
    let sum = summary()?;
    let composer = store().load_composer().map_err(|e| e.to_string())?;
    ensure(composer.meta.training_skills == TRAINING_SKILLS, || {
        format!("composer trained on {:?}", composer.meta.training_skills)
    })?;
    let r = sum.matrix(Strategy::ComposerR).ok_or("no composer-R matrix")?;
    let rs = sum.matrix(Strategy::RandomSwitch).ok_or("no random-switch matrix")?;
    ensure(r.cells.len() == 36 && rs.cells.len() == 36, || format!("{} / {} cells", r.cells.len(), rs.cells.len()))?;
    let n = r.cells.iter().chain(&rs.cells).map(|c| c.episodes).min().unwrap_or(0);
    ensure(n >= 1000, || format!("smallest cell has {n} episodes, need 1000"))?;
    let (r_train, rs_train) = (r.mean_rate(is_training), rs.mean_rate(is_training));
    let (r_new, rs_new) = (r.mean_rate(|c| !is_training(c)), rs.mean_rate(|c| !is_training(c)));
    let detail = format!(
        "training 9 cells: composer-R {:.2}% vs RS {:.2}%; remaining 27 cells: composer-R {:.2}% vs RS {:.2}%",
        100.0 * r_train,
        100.0 * rs_train,
        100.0 * r_new,
        100.0 * rs_new
    );
    let mut failed = Vec::new();
    if !(r_train >= 0.90) {
        failed.push("composer-R < 90% on training cells");
    }
    if !(r_train > rs_train) {
        failed.push("composer-R not above RS on training cells");
    }
    if !(r_new >= 0.80) {
        failed.push("composer-R < 80% on remaining cells");
    }
    if !(r_new >= rs_new + 0.10) {
        failed.push("composer-R below RS + 10 points on remaining cells");
    }
    ensure(failed.is_empty(), || format!("{}: {detail}", failed.join("; ")))?;
    Ok(detail)
}

fn covers_whole_cycle(iv: &[PhaseInterval]) -> bool {
    let total: f64 = iv.iter().map(|i| i.len()).sum();
    (total - 1.0).abs() < 1e-9
}

fn composer_o() -> Outcome {
    let sum = summary()?;
    let r = sum.matrix(Strategy::ComposerR).ok_or("no composer-R matrix")?;
    let o = sum.matrix(Strategy::ComposerO).ok_or("no composer-O matrix")?;
    let intervals: BTreeMap<(&str, &str), &Vec<PhaseInterval>> =
        sum.optimal_intervals.iter().map(|(a, b, iv)| ((a.as_str(), b.as_str()), iv)).collect();
    let mut bad = Vec::new();
    let mut excluded = 0;
    for c in &r.cells {
        let oc = o.cell(&c.source, &c.target).ok_or_else(|| format!("no composer-O cell {}->{}", c.source, c.target))?;
        if oc.rate < c.rate - 0.02 {
            bad.push(format!("{}->{} O {:.3} < R {:.3} - 0.02", c.source, c.target, oc.rate, c.rate));
        }
        let iv = intervals.get(&(c.source.as_str(), c.target.as_str())).map(|v| v.as_slice()).unwrap_or(&[]);
        // an empty set means no bin qualified and sampling stays uniform
        if !iv.is_empty() && !covers_whole_cycle(iv) {
            excluded += 1;
            if !(oc.rate > c.rate) {
                bad.push(format!("{}->{} excludes phases but O {:.3} <= R {:.3}", c.source, c.target, oc.rate, c.rate));
            }
        }
    }
    ensure(bad.is_empty(), || bad.join("; "))?;
    Ok(format!("{} pairs within 0.02, {excluded} pairs with excluded phases all improved", r.cells.len()))
}

fn durations() -> Outcome {
    let sum = summary()?;
    let r = sum.matrix(Strategy::ComposerR).ok_or("no composer-R matrix")?;
    let horizon = ToleranceSchedule::default().horizon;
    let long: Vec<String> = r
        .cells
        .iter()
        .filter(|c| c.rate > 0.9 && !(c.mean_duration < horizon))
        .map(|c| format!("{}->{} {:.2}s", c.source, c.target, c.mean_duration))
        .collect();
    ensure(long.is_empty(), || format!("mean duration at or above {horizon} s: {}", long.join(", ")))?;
    let d = sum.durations;
    ensure(d.same_pairs > 0 && d.reversed_pairs > 0, || "no same or reversed direction pairs".into())?;
    ensure(d.same_direction_mean < d.reversed_direction_mean, || {
        format!("same-direction {:.3}s not shorter than reversed {:.3}s", d.same_direction_mean, d.reversed_direction_mean)
    })?;
    let n = r.cells.iter().filter(|c| c.rate > 0.9).count();
    Ok(format!(
        "{n} pairs above 90% all under {horizon} s; same {:.3}s ({} pairs) < reversed {:.3}s ({} pairs)",
        d.same_direction_mean, d.same_pairs, d.reversed_direction_mean, d.reversed_pairs
    ))
}

fn preservation() -> Outcome {
    let store = store();
    // expand a freshly loaded library and compare the artifacts
    let mut lib = store.load_library(&TRAINING_SKILLS).map_err(|e| e.to_string())?;
    let before = lib.checksums();
    let files: Vec<PathBuf> =
        TRAINING_SKILLS.iter().map(|n| store.expert_path(n)).chain([store.composer_path()]).collect();
    let read = |ps: &[PathBuf]| -> Result<Vec<Vec<u8>>, String> {
        ps.iter().map(|p| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))).collect()
    };
    let bytes_before = read(&files)?;
    for name in EXPANSION_SKILLS {
        let expert = store.load_expert(name).map_err(|e| e.to_string())?;
        let clip = store.load_clip(name).map_err(|e| e.to_string())?;
        lib.add_skill(expert, clip).map_err(|e| e.to_string())?;
    }
    let after = lib.checksums();
    for (k, v) in &before {
        ensure(after.get(k) == Some(v), || format!("{k} changed when skills were added"))?;
    }
    ensure(read(&files)? == bytes_before, || "artifact files changed".into())?;

    let sum = summary()?;
    for (k, v) in &sum.checksums_before {
        ensure(sum.checksums_after.get(k) == Some(v), || format!("{k} changed during the benchmark"))?;
    }
    ensure(sum.preservation.len() == 9, || format!("{} re-measured pairs, expected 9", sum.preservation.len()))?;
    let mut moved = Vec::new();
    for p in &sum.preservation {
        ensure(p.before.episodes >= 1000 && p.after.episodes >= 1000, || {
            format!("{}->{} measured with fewer than 1000 episodes", p.before.source, p.before.target)
        })?;
        if !p.before.intervals_overlap(&p.after) {
            moved.push(format!(
                "{}->{} {:.3} [{:.3}, {:.3}] vs {:.3} [{:.3}, {:.3}]",
                p.before.source, p.before.target, p.before.rate, p.before.ci_low, p.before.ci_high, p.after.rate,
                p.after.ci_low, p.after.ci_high
            ));
        }
    }
    ensure(moved.is_empty(), || format!("Wilson intervals do not overlap: {}", moved.join("; ")))?;
    Ok(format!("{} artifacts checksum-identical, 9 pairs with overlapping Wilson intervals", before.len()))
}

/// Cyclic Jacobi eigenvalues of a small symmetric matrix, descending.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| a[i][j] * a[i][j]).sum::<f64>()).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 { 1.0 } else { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (a[p][k], a[q][k]);
                    a[p][k] = c * x - s * y;
                    a[q][k] = s * x + c * y;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn pca_check() -> Outcome {
    // oracle on data shaped like agent states
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = 21;
    let data: Vec<Vec<f64>> = (0..2000)
        .map(|_| {
            let u: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            (0..d).map(|j| (1.0 + j as f64) * (u[j % 4] - 0.5 * u[(j + 1) % 4]) + 0.1 * rng.random_range(-1.0..1.0)).collect()
        })
        .collect();
    let n = data.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..d).map(|j| (data.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for x in &data {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (x[i] - mean[i]) / sd[i] * (x[j] - mean[j]) / sd[j] / n;
            }
        }
    }
    let oracle = jacobi_eigenvalues(cov);
    let p = pca(&data, 2).map_err(|e| e.to_string())?;
    let discarded: f64 = oracle[2..].iter().sum();
    let err = (p.reconstruction_error(&data) - discarded).abs();
    ensure(err <= 1e-8, || format!("reconstruction error differs from discarded eigenvalues by {err:e}"))?;

    let sum = summary()?;
    let s = &sum.pca;
    let gap = (s.reconstruction_error - s.discarded_eigenvalue_sum).abs();
    ensure(gap <= 1e-8, || format!("benchmark PCA: reconstruction error off by {gap:e}"))?;
    ensure(s.samples_transition > 0 && s.contour_level_95.is_finite(), || "composer 95% contour missing".into())?;
    let bench = store().bench_dir();
    for f in ["pca.csv", "pca_density.csv"] {
        ensure(bench.join(f).is_file(), || format!("{f} not written"))?;
    }
    Ok(format!(
        "oracle gap {err:.1e}, benchmark gap {gap:.1e}; 95% contour over {} composer states ({:.1}% inside), explained {:.1}%",
        s.samples_transition,
        100.0 * s.contour_fraction_inside,
        100.0 * s.explained_ratio.iter().sum::<f64>()
    ))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("tolerance schedule", schedule),
        ("boundary indicator and reward truth table", truth_table),
        ("PPO gradients and bandit", ppo),
        ("physics", physics),
        ("experts", experts),
        ("composer vs random switch", composer),
        ("composer-O vs composer-R", composer_o),
        ("transition durations", durations),
        ("repertoire preservation", preservation),
        ("state PCA", pca_check),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let r = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let t = start.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("PASS  {name} ({t:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({t:.1}s): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
