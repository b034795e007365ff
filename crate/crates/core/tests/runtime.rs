use ecp_core::clips::{default_gaits, generate_clip, MotionClip, Phase, PhaseInterval};
use ecp_core::composer::{untrained_composer, ComposerConfig, ToleranceSchedule};
use ecp_core::experts::{untrained_expert, ExpertArtifact, ExpertConfig};
use ecp_core::pipeline::{untrained_library, ArtifactStore, EXPANSION_SKILLS, TRAINING_SKILLS};
use ecp_core::runtime::{
    evaluate, evaluate_batch, Controller, ControllerMode, LibraryError, Manifest, SkillLibrary, SwitchRequest,
    TargetSampling, TickEvent,
};
use ecp_core::simcore::{EpisodeParams, SimConfig, Simulator};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn clip(name: &str) -> MotionClip {
    let spec = default_gaits().into_iter().find(|g| g.name == name).unwrap();
    generate_clip(&spec, &SimConfig::default().model).unwrap()
}

fn training_library() -> SkillLibrary {
    let names: Vec<String> = TRAINING_SKILLS.iter().map(|s| s.to_string()).collect();
    let mut lib = SkillLibrary::with_composer(untrained_composer(
        &names,
        &ComposerConfig::default(),
        &ToleranceSchedule::default(),
        1,
    ));
    for (k, n) in TRAINING_SKILLS.iter().enumerate() {
        let c = clip(n);
        lib.add_skill(untrained_expert(&c, &ExpertConfig::default(), k as u64), c).unwrap();
    }
    lib
}

#[test]
fn add_skill_rejects_duplicates_and_mismatches() {
    let mut lib = training_library();
    let c = clip("walk-F");
    let err = lib.add_skill(untrained_expert(&c, &ExpertConfig::default(), 9), c).unwrap_err();
    assert!(matches!(err, LibraryError::Duplicate(ref n) if n == "walk-F"), "{err}");

    // an expert trained on another clip
    let hop = clip("hop");
    let wrong = untrained_expert(&clip("stand"), &ExpertConfig::default(), 9);
    assert!(lib.add_skill(wrong, hop.clone()).is_err());

    // a network with the composer's input size
    let composer = lib.composer().unwrap().checkpoint.clone();
    let good = untrained_expert(&hop, &ExpertConfig::default(), 9);
    let bad = ExpertArtifact::new(good.meta.clone(), composer);
    assert!(matches!(lib.add_skill(bad, hop), Err(LibraryError::Dimension { .. })));
    assert_eq!(lib.len(), 3);
}

#[test]
fn expansion_leaves_existing_artifacts_untouched() {
    let mut lib = training_library();
    let before = lib.checksums();
    assert_eq!(before.len(), 4);
    for n in EXPANSION_SKILLS {
        let c = clip(n);
        lib.add_skill(untrained_expert(&c, &ExpertConfig::default(), 42), c).unwrap();
    }
    let after = lib.checksums();
    assert_eq!(after.len(), 7);
    for (k, v) in &before {
        assert_eq!(after.get(k), Some(v), "{k} changed");
    }
}

fn write_store(dir: &std::path::Path) -> ArtifactStore {
    let store = ArtifactStore::new(dir);
    let sim = SimConfig::default();
    let lib = untrained_library(&sim, 3);
    store.generate_clips(&sim).unwrap();
    for i in 0..lib.len() {
        let e = lib.entry(i);
        std::fs::create_dir_all(store.expert_path(e.name()).parent().unwrap()).unwrap();
        e.expert.save(&store.expert_path(e.name())).unwrap();
    }
    std::fs::create_dir_all(store.composer_path().parent().unwrap()).unwrap();
    lib.composer().unwrap().save(&store.composer_path()).unwrap();
    store
}

#[test]
fn manifest_round_trip_and_checksum_guard() {
    let dir = tempfile::tempdir().unwrap();
    let store = write_store(dir.path());
    let names: Vec<&str> = TRAINING_SKILLS.iter().chain(EXPANSION_SKILLS.iter()).copied().collect();
    let mut m = store.build_manifest(&names).unwrap();
    m.skills[0]
        .optimal_intervals
        .insert("hop".into(), vec![PhaseInterval::new(0.1, 0.3)]);
    m.save(&store.manifest_path()).unwrap();
    let loaded = Manifest::load(&store.manifest_path()).unwrap();
    assert_eq!(loaded, m);
    let lib = loaded.load_library(dir.path()).unwrap();
    assert_eq!(lib.names(), names);
    assert_eq!(lib.entry(0).optimal_intervals["hop"], vec![PhaseInterval::new(0.1, 0.3)]);
    assert!(lib.composer().is_some());

    // flip one byte of one expert
    let path = store.expert_path("trot-B");
    let mut bytes = std::fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(loaded.load_library(dir.path()), Err(LibraryError::Checksum { .. })));
}

struct Rig {
    lib: SkillLibrary,
    sim: Simulator,
    rng: ChaCha8Rng,
}

impl Rig {
    fn new() -> Self {
        let cfg = SimConfig::default();
        let lib = untrained_library(&cfg, 2);
        let mut sim = Simulator::new(cfg.clone());
        let start = lib.get("stand").unwrap().clip.sample_state(Phase::ZERO);
        sim.reset(start, EpisodeParams::nominal(&cfg.model, &cfg.contact));
        Self {
            lib,
            sim,
            rng: ChaCha8Rng::seed_from_u64(8),
        }
    }

    fn controller(&self, skill: &str, sampling: TargetSampling) -> Controller {
        Controller::new(self.lib.index_of(skill).unwrap(), Phase::ZERO, sampling, self.sim.config().control_dt())
    }

    fn tick(&mut self, c: &mut Controller, pending: &mut Option<SwitchRequest>) -> Vec<TickEvent> {
        let observed = *self.sim.state();
        let model = self.sim.model().clone();
        let (cmd, events) = c.tick(&self.lib, &model, &observed, pending, &mut self.rng).unwrap();
        self.sim.step(&cmd).unwrap();
        events
    }
}

fn request(target: &str) -> Option<SwitchRequest> {
    Some(SwitchRequest {
        target: target.into(),
        timestamp: 0.0,
    })
}

#[test]
fn expert_phase_advances_with_control_steps() {
    let mut rig = Rig::new();
    let mut c = rig.controller("stand", TargetSampling::Random);
    let period = rig.lib.get("stand").unwrap().clip.period;
    let dt = c.control_dt();
    let mut pending = None;
    for k in 1..=45 {
        assert!(rig.tick(&mut c, &mut pending).is_empty());
        let ControllerMode::Expert { skill, phase } = c.mode else { panic!() };
        assert_eq!(skill, rig.lib.index_of("stand").unwrap());
        let expected = (k as f64 * dt / period).fract();
        let d = (phase.value() - expected).abs();
        assert!(d < 1e-9 || (1.0 - d) < 1e-9, "step {k}: {} vs {expected}", phase.value());
    }
}

#[test]
fn self_transition_is_permitted() {
    let mut rig = Rig::new();
    let mut c = rig.controller("stand", TargetSampling::Random);
    let mut pending = request("stand");
    let events = rig.tick(&mut c, &mut pending);
    assert!(pending.is_none());
    assert!(matches!(&events[..], [TickEvent::TransitionStarted { source, target, .. }] if source == "stand" && target == "stand"));
}

#[test]
fn handoff_enters_target_at_sampled_phase() {
    let mut rig = Rig::new();
    let window = PhaseInterval::new(0.40, 0.45);
    rig.lib.set_optimal_intervals("stand", "walk-F", vec![window]).unwrap();
    let mut c = rig.controller("stand", TargetSampling::Optimal);
    let mut pending = request("walk-F");
    let events = rig.tick(&mut c, &mut pending);
    let [TickEvent::TransitionStarted { target_phase, .. }] = events[..] else { panic!("{events:?}") };
    assert!(window.contains(target_phase));
    let mut ended = false;
    for _ in 0..80 {
        // run prepare only, so the mode right after the handoff is visible
        let observed = *rig.sim.state();
        let (query, events) = c.prepare(&rig.lib, &observed, &mut pending, &mut rig.rng).unwrap();
        if let Some(TickEvent::TransitionEnded { duration, .. }) = events.first() {
            let ControllerMode::Expert { skill, phase } = c.mode else { panic!() };
            assert_eq!(skill, rig.lib.index_of("walk-F").unwrap());
            assert_eq!(phase.value(), target_phase);
            assert!(*duration > 0.0 && *duration <= 2.0 + 1e-9);
            ended = true;
            break;
        }
        let out = evaluate(&rig.lib, &query).unwrap();
        let model = rig.sim.model().clone();
        let cmd = c.apply(&rig.lib, &model, &out);
        rig.sim.step(&cmd).unwrap();
    }
    assert!(ended, "transition did not end within the horizon");
}

#[test]
fn request_during_transition_waits_for_handoff() {
    let mut rig = Rig::new();
    let mut c = rig.controller("stand", TargetSampling::Random);
    let mut pending = request("walk-F");
    rig.tick(&mut c, &mut pending);
    assert!(c.mode.is_transitioning());
    // operators replace the pending request; only the newest survives
    pending = request("trot-F");
    for _ in 0..80 {
        let events = rig.tick(&mut c, &mut pending);
        if events.iter().any(|e| matches!(e, TickEvent::TransitionEnded { .. })) {
            assert!(matches!(&events[..], [TickEvent::TransitionEnded { target: a, .. }, TickEvent::TransitionStarted { source, target: b, .. }]
                if a == "walk-F" && source == "walk-F" && b == "trot-F"), "{events:?}");
            assert!(pending.is_none());
            return;
        }
        assert_eq!(pending.as_ref().unwrap().target, "trot-F");
    }
    panic!("transition did not end within the horizon");
}

#[test]
fn unknown_request_is_an_error() {
    let mut rig = Rig::new();
    let mut c = rig.controller("stand", TargetSampling::Random);
    let observed = *rig.sim.state();
    let mut pending = request("moonwalk");
    let err = c.prepare(&rig.lib, &observed, &mut pending, &mut rig.rng).unwrap_err();
    assert!(matches!(err, LibraryError::UnknownSkill(_)));
}

#[test]
fn transitions_need_a_composer() {
    let mut lib = SkillLibrary::new();
    let c = clip("stand");
    lib.add_skill(untrained_expert(&c, &ExpertConfig::default(), 0), c).unwrap();
    let mut ctl = Controller::new(0, Phase::ZERO, TargetSampling::Random, 1.0 / 30.0);
    let s = lib.entry(0).clip.sample_state(Phase::ZERO);
    assert!(matches!(ctl.begin_transition(&lib, 0, Phase::ZERO, &s), Err(LibraryError::NoComposer)));
}

#[test]
fn batched_evaluation_matches_single_queries() {
    let mut rig = Rig::new();
    let mut queries = Vec::new();
    for (k, name) in ["hop", "stand", "walk-F", "hop"].iter().enumerate() {
        let mut c = rig.controller(name, TargetSampling::Random);
        let mut pending = if k == 2 { request("trot-B") } else { None };
        let observed = *rig.sim.state();
        queries.push(c.prepare(&rig.lib, &observed, &mut pending, &mut rig.rng).unwrap().0);
    }
    let batch = evaluate_batch(&rig.lib, &queries).unwrap();
    for (q, out) in queries.iter().zip(&batch) {
        assert_eq!(&evaluate(&rig.lib, q).unwrap(), out);
    }
}

proptest! {
    #[test]
    fn optimal_sampling_stays_in_intervals(
        raw in prop::collection::vec((0.0f64..1.0, 0.001f64..0.2), 1..5),
        seed in any::<u64>(),
    ) {
        // disjoint intervals from sorted starts
        let mut starts: Vec<(f64, f64)> = raw;
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut iv = Vec::new();
        let mut floor = 0.0;
        for (s, l) in starts {
            let s = s.max(floor);
            let e = (s + l).min(1.0);
            if e > s {
                iv.push(PhaseInterval::new(s, e));
                floor = e;
            }
        }
        prop_assume!(!iv.is_empty());
        let mut lib = untrained_library(&SimConfig::default(), 0);
        lib.set_optimal_intervals("walk-F", "hop", iv.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let p = lib.sample_target_phase("walk-F", "hop", TargetSampling::Optimal, &mut rng).unwrap().value();
            prop_assert!(iv.iter().any(|i| i.contains(p)), "{p} outside {iv:?}");
            // other sources have no intervals and sample the whole cycle
            let q = lib.sample_target_phase("stand", "hop", TargetSampling::Optimal, &mut rng).unwrap().value();
            prop_assert!((0.0..1.0).contains(&q));
        }
    }
}
