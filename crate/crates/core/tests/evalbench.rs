use std::collections::BTreeMap;

use ecp_core::clips::Phase;
use ecp_core::evalbench::pca::pca;
use ecp_core::evalbench::stats::{duration_summary, wilson_interval, SuccessMatrix, Z_95};
use ecp_core::evalbench::{
    run_episode, run_episodes, EpisodeConfig, EpisodeSpec, FailureStage, Strategy, TargetPhase,
    TransitionEpisodeResult,
};
use ecp_core::pipeline::untrained_library;
use ecp_core::simcore::SimConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn result(source: &str, target: &str, strategy: Strategy, success: bool, duration: f64) -> TransitionEpisodeResult {
    TransitionEpisodeResult {
        source: source.into(),
        target: target.into(),
        source_phase: 0.0,
        target_phase: 0.0,
        strategy,
        success,
        failure_stage: if success { FailureStage::None } else { FailureStage::Transition },
        duration,
        seed: 0,
        redraws: 0,
    }
}

const SKILLS: [&str; 3] = ["a", "b", "c"];

fn stub(strategy: Strategy, n: usize, success: impl Fn(usize, usize, usize) -> bool) -> Vec<TransitionEpisodeResult> {
    let mut out = Vec::new();
    for (i, s) in SKILLS.iter().enumerate() {
        for (j, t) in SKILLS.iter().enumerate() {
            for k in 0..n {
                out.push(result(s, t, strategy, success(i, j, k), 0.5 + 0.1 * k as f64));
            }
        }
    }
    out
}

#[test]
fn all_success_and_all_failure_stubs() {
    let good = SuccessMatrix::from_results(Strategy::ComposerR, &stub(Strategy::ComposerR, 40, |_, _, _| true));
    assert_eq!(good.cells.len(), 9);
    let (lo, hi) = wilson_interval(40, 40, Z_95);
    for c in &good.cells {
        assert_eq!((c.episodes, c.successes, c.rate), (40, 40, 1.0));
        assert_eq!((c.ci_low, c.ci_high), (lo, hi));
    }
    assert_eq!(good.mean_rate(|_| true), 1.0);
    assert_eq!(good.pooled_rate(), 1.0);

    let bad = SuccessMatrix::from_results(Strategy::RandomSwitch, &stub(Strategy::RandomSwitch, 40, |_, _, _| false));
    assert!(bad.cells.iter().all(|c| c.rate == 0.0 && c.ci_low == 0.0 && c.mean_duration == 0.0));
    assert_eq!(bad.pooled_rate(), 0.0);
    assert!(!good.cells[0].intervals_overlap(&bad.cells[0]));
}

#[test]
fn other_strategies_are_ignored() {
    let mut rs = stub(Strategy::RandomSwitch, 5, |_, _, _| true);
    rs.extend(stub(Strategy::LinearInterp, 5, |_, _, _| false));
    let m = SuccessMatrix::from_results(Strategy::LinearInterp, &rs);
    assert!(m.cells.iter().all(|c| c.episodes == 5 && c.successes == 0));
}

#[test]
fn pooled_rate_equals_total_successes_over_total_episodes() {
    // cells with unequal episode counts, so pooled and mean differ
    let mut rs = Vec::new();
    for (k, (s, t)) in [("a", "a"), ("a", "b"), ("b", "a")].iter().enumerate() {
        let n = 10 * (k + 1);
        for e in 0..n {
            rs.push(result(s, t, Strategy::ComposerR, e % (k + 2) == 0, 1.0));
        }
    }
    let m = SuccessMatrix::from_results(Strategy::ComposerR, &rs);
    let total = rs.len() as f64;
    let wins = rs.iter().filter(|r| r.success).count() as f64;
    assert!((m.pooled_rate() - wins / total).abs() < 1e-15);
    let mean = m.cells.iter().map(|c| c.rate).sum::<f64>() / 3.0;
    assert!((m.mean_rate(|_| true) - mean).abs() < 1e-15);
    assert!((m.pooled_rate() - m.mean_rate(|_| true)).abs() > 1e-3);
}

#[test]
fn durations_average_successful_episodes_only() {
    let rs = vec![
        result("a", "b", Strategy::ComposerR, true, 1.0),
        result("a", "b", Strategy::ComposerR, true, 2.0),
        result("a", "b", Strategy::ComposerR, false, 9.0),
        result("a", "c", Strategy::ComposerR, true, 0.4),
        result("c", "c", Strategy::ComposerR, true, 0.6),
    ];
    let m = SuccessMatrix::from_results(Strategy::ComposerR, &rs);
    assert_eq!(m.cell("a", "b").unwrap().mean_duration, 1.5);
    let dirs: BTreeMap<String, i8> = [("a".to_string(), 1), ("b".to_string(), -1), ("c".to_string(), 1)].into();
    let d = duration_summary(&m, &dirs);
    assert_eq!((d.reversed_pairs, d.reversed_direction_mean), (1, 1.5));
    assert_eq!(d.same_pairs, 2);
    assert!((d.same_direction_mean - 0.5).abs() < 1e-15);
}

proptest! {
    #[test]
    fn aggregation_ignores_episode_order(outcomes in prop::collection::vec(any::<bool>(), 9 * 6), seed in any::<u64>()) {
        let rs = stub(Strategy::ComposerO, 6, |i, j, k| outcomes[(i * 3 + j) * 6 + k]);
        let mut shuffled = rs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = SuccessMatrix::from_results(Strategy::ComposerO, &rs);
        let b = SuccessMatrix::from_results(Strategy::ComposerO, &shuffled);
        prop_assert_eq!(a.cells.len(), b.cells.len());
        for (x, y) in a.cells.iter().zip(&b.cells) {
            prop_assert_eq!((&x.source, &x.target, x.episodes, x.successes), (&y.source, &y.target, y.episodes, y.successes));
            prop_assert!((x.mean_duration - y.mean_duration).abs() < 1e-12);
            prop_assert_eq!((x.ci_low, x.ci_high), (y.ci_low, y.ci_high));
        }
    }

    #[test]
    fn wilson_interval_contains_the_rate(n in 1usize..5000, frac in 0.0..=1.0f64) {
        let k = ((n as f64) * frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n, Z_95);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}

/// Cyclic Jacobi eigenvalues of a small symmetric matrix.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

#[test]
fn pca_matches_a_brute_force_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 6;
    let n = 400;
    // correlated data with very different per-dimension scales
    let data: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            (0..d)
                .map(|j| (10f64).powi(j as i32 - 2) * (u[j % 3] + 0.3 * u[(j + 1) % 3] + 0.05 * rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
    let sd: Vec<f64> =
        (0..d).map(|j| (data.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for x in &data {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (x[i] - mean[i]) / sd[i] * (x[j] - mean[j]) / sd[j] / n as f64;
            }
        }
    }
    let oracle = jacobi_eigenvalues(cov);
    assert!((oracle.iter().sum::<f64>() - d as f64).abs() < 1e-9);
    for k in 1..=d {
        let p = pca(&data, k).unwrap();
        for (a, b) in p.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let discarded: f64 = oracle[k..].iter().sum();
        assert!((p.reconstruction_error(&data) - discarded).abs() < 1e-8, "k={k}");
        assert!((p.discarded_variance() - discarded).abs() < 1e-9);
        let ratio: f64 = p.explained_ratio().iter().sum();
        assert!((ratio - oracle[..k].iter().sum::<f64>() / d as f64).abs() < 1e-9);
    }
}

fn quick_episodes() -> EpisodeConfig {
    EpisodeConfig {
        trigger_min: 0.3,
        trigger_max: 0.5,
        post_seconds: 1.0,
        ..EpisodeConfig::default()
    }
}

#[test]
fn random_switch_to_the_same_skill_and_phase_changes_nothing() {
    let sim = SimConfig::default();
    let lib = untrained_library(&sim, 7);
    let stand = lib.index_of("stand").unwrap();
    let mut spec = EpisodeSpec::new(stand, stand, Strategy::RandomSwitch, 31);
    spec.target_phase = TargetPhase::Continue;
    let r = run_episode(&lib, &sim, &quick_episodes(), spec).unwrap();
    assert!(r.success, "{r:?}");
    assert_eq!(r.failure_stage, FailureStage::None);
    assert!((r.target_phase - r.source_phase).abs() < 1e-12);
    assert_eq!(r.duration, 0.0);
}

#[test]
fn episodes_are_reproducible_from_their_seed() {
    let sim = SimConfig::default();
    let lib = untrained_library(&sim, 7);
    let stand = lib.index_of("stand").unwrap();
    let walk = lib.index_of("walk-F").unwrap();
    let specs: Vec<EpisodeSpec> = [Strategy::RandomSwitch, Strategy::LinearInterp, Strategy::ComposerR]
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            let mut e = EpisodeSpec::new(stand, walk, s, 100 + k as u64);
            e.target_phase = TargetPhase::Fixed(Phase::new(0.25).unwrap());
            e
        })
        .collect();
    let cfg = quick_episodes();
    let a: Vec<_> = run_episodes(&lib, &sim, &cfg, specs.clone()).into_iter().map(|(r, _)| r).collect();
    let b: Vec<_> = run_episodes(&lib, &sim, &cfg, specs.clone()).into_iter().map(|(r, _)| r).collect();
    assert_eq!(a, b);
    // batching does not change an episode
    let single = run_episode(&lib, &sim, &cfg, specs[2].clone());
    assert_eq!(single, a[2]);
    for r in a.iter().flatten() {
        assert!((r.target_phase - 0.25).abs() < 1e-12);
    }
}
