use ecp_core::simcore::{
    detect_failure, standing_state, ActionCommand, AgentState, EpisodeParams, RandomizationConfig, SimConfig,
    Simulator,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn nominal(cfg: &SimConfig) -> EpisodeParams {
    EpisodeParams::nominal(&cfg.model, &cfg.contact)
}

#[test]
fn free_fall_matches_closed_form() {
    let cfg = SimConfig::default();
    let mut sim = Simulator::new(cfg.clone());
    let mut s = standing_state(&cfg.model, 0.28);
    s.z = 10.0;
    sim.reset(s, nominal(&cfg));
    let hold = ActionCommand::new(s.joint_pos);
    // 30 control steps = 1 s
    for _ in 0..30 {
        sim.step(&hold).unwrap();
    }
    let t = sim.sim_time();
    let expected = 0.5 * cfg.gravity * t * t;
    let drop = 10.0 - sim.state().z;
    assert!((drop - expected).abs() / expected < 0.01, "drop {drop} expected {expected}");
}

#[test]
fn momentum_conserved_without_gravity_or_contact() {
    let mut cfg = SimConfig::default();
    cfg.gravity = 0.0;
    let mut sim = Simulator::new(cfg.clone());
    let mut s = standing_state(&cfg.model, 0.28);
    s.z = 5.0;
    s.vx = 0.7;
    s.vz = -0.3;
    s.pitch_rate = 1.5;
    s.joint_vel = [2.0, -1.0, 0.5, 1.5, -2.0, 0.3, 1.0, -0.4];
    sim.reset(s, nominal(&cfg));
    let p0 = sim.linear_momentum();
    let norm0 = (p0[0] * p0[0] + p0[1] * p0[1]).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    use rand::Rng;
    // 125 control steps = 1000 physics steps, with internal PD torques.
    for _ in 0..125 {
        let mut targets = s.joint_pos;
        for t in targets.iter_mut() {
            *t += rng.random_range(-0.4..0.4);
        }
        sim.step(&ActionCommand::new(targets)).unwrap();
    }
    assert_eq!(sim.clock().elapsed_steps, 1000);
    let p1 = sim.linear_momentum();
    let drift = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt() / norm0;
    assert!(drift <= 1e-6, "relative drift {drift}");
}

#[test]
fn resting_contact_penetration_bounded() {
    let cfg = SimConfig::default();
    let mut sim = Simulator::new(cfg.clone());
    let s = standing_state(&cfg.model, 0.28);
    sim.reset(s, nominal(&cfg));
    let hold = ActionCommand::new(s.joint_pos);
    for _ in 0..90 {
        sim.step(&hold).unwrap();
    }
    let st = *sim.state();
    assert!(st.contacts.iter().all(|c| *c));
    assert!(!detect_failure(&st, &cfg.model));
    // Each foot carries a quarter of the weight; with k = 2e4 N/m the static
    // deflection is m g / (4 k). The PD sag on the knees is not penetration.
    let bound = cfg.contact.static_deflection(&cfg.model, cfg.gravity, 4);
    let mut pen: f64 = 0.0;
    for _ in 0..30 {
        sim.step(&hold).unwrap();
        pen = pen.max(sim.last_info().max_penetration);
    }
    assert!(pen <= 1.5 * bound, "penetration {pen} vs static bound {bound}");
    assert!(pen >= 0.5 * bound);
    assert!(st.vx.abs() < 1e-3 && st.vz.abs() < 1e-3);
}

fn rollout(seed: u64) -> Vec<AgentState> {
    let cfg = SimConfig::default();
    let rand = RandomizationConfig::expert();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sim = Simulator::new(cfg.clone());
    let s = standing_state(&cfg.model, 0.28);
    sim.reset(s, rand.sample_episode(&mut rng));
    let mut out = Vec::new();
    for k in 0..60 {
        let mut targets = s.joint_pos;
        targets[0] += 0.3 * (k as f64 * 0.3).sin();
        targets[5] -= 0.3 * (k as f64 * 0.2).cos();
        let cmd = rand.perturb_action(&ActionCommand::new(targets), &mut rng);
        out.push(*sim.step(&cmd).unwrap());
    }
    out
}

#[test]
fn seeded_runs_are_bitwise_identical() {
    let a = rollout(11);
    let b = rollout(11);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.positions().map(f64::to_bits), y.positions().map(f64::to_bits));
        assert_eq!(x.velocities().map(f64::to_bits), y.velocities().map(f64::to_bits));
        assert_eq!(x.contacts, y.contacts);
    }
    assert_ne!(a, rollout(12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn limits_and_torques_respected(targets in prop::array::uniform8(-4.0f64..4.0), seed in 0u64..1000) {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sim = Simulator::new(cfg.clone());
        sim.reset(standing_state(&cfg.model, 0.28), cfg.randomization.expert.sample_episode(&mut rng));
        for _ in 0..15 {
            let st = *sim.step(&ActionCommand::new(targets)).unwrap();
            for j in 0..8 {
                let r = cfg.model.joint_range(j);
                prop_assert!(st.joint_pos[j] >= r.lower && st.joint_pos[j] <= r.upper);
                prop_assert!(sim.last_info().torques[j].abs() <= cfg.model.torque_limit + 1e-9);
            }
            prop_assert!(st.pitch > -std::f64::consts::PI && st.pitch <= std::f64::consts::PI);
            prop_assert!(st.is_finite());
        }
    }
}
