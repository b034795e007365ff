use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Strategy, TransitionEpisodeResult};
use crate::clips::PhaseInterval;

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub const Z_95: f64 = 1.959_963_984_540_054;

/// Success statistics of one ordered pair under one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub source: String,
    pub target: String,
    pub strategy: Strategy,
    pub episodes: usize,
    pub successes: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Mean transition-stage duration over successful episodes (s).
    pub mean_duration: f64,
}

impl CellStats {
    pub fn intervals_overlap(&self, other: &CellStats) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// Success rates over ordered pairs for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessMatrix {
    pub strategy: Strategy,
    pub cells: Vec<CellStats>,
}

impl SuccessMatrix {
    /// Groups results by pair. Cells come out sorted by (source, target)
    /// regardless of the order of `results`.
    pub fn from_results(strategy: Strategy, results: &[TransitionEpisodeResult]) -> Self {
        let mut acc: BTreeMap<(String, String), (usize, usize, f64)> = BTreeMap::new();
        for r in results.iter().filter(|r| r.strategy == strategy) {
            let e = acc.entry((r.source.clone(), r.target.clone())).or_insert((0, 0, 0.0));
            e.0 += 1;
            if r.success {
                e.1 += 1;
                e.2 += r.duration;
            }
        }
        let cells = acc
            .into_iter()
            .map(|((source, target), (n, k, dur))| {
                let (ci_low, ci_high) = wilson_interval(k, n, Z_95);
                CellStats {
                    source,
                    target,
                    strategy,
                    episodes: n,
                    successes: k,
                    rate: k as f64 / n as f64,
                    ci_low,
                    ci_high,
                    mean_duration: if k > 0 { dur / k as f64 } else { 0.0 },
                }
            })
            .collect();
        Self { strategy, cells }
    }

    pub fn cell(&self, source: &str, target: &str) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.source == source && c.target == target)
    }

    /// Unweighted mean of the cell rates over the pairs accepted by `keep`.
    pub fn mean_rate(&self, keep: impl Fn(&CellStats) -> bool) -> f64 {
        let v: Vec<f64> = self.cells.iter().filter(|c| keep(c)).map(|c| c.rate).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    /// Pooled success rate: all successes over all episodes.
    pub fn pooled_rate(&self) -> f64 {
        let n: usize = self.cells.iter().map(|c| c.episodes).sum();
        let k: usize = self.cells.iter().map(|c| c.successes).sum();
        if n == 0 {
            f64::NAN
        } else {
            k as f64 / n as f64
        }
    }
}

/// Success rate and mean duration per target-phase bin for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    pub source: String,
    pub target: String,
    pub bins: usize,
    pub counts: Vec<usize>,
    pub successes: Vec<usize>,
    /// Mean transition duration over successful episodes in each bin (s).
    pub mean_durations: Vec<f64>,
}

pub const PHASE_BINS: usize = 20;

impl PhaseProfile {
    pub fn new(source: &str, target: &str, bins: usize) -> Self {
        assert!(bins > 0, "a profile needs at least one bin");
        Self {
            source: source.into(),
            target: target.into(),
            bins,
            counts: vec![0; bins],
            successes: vec![0; bins],
            mean_durations: vec![0.0; bins],
        }
    }

    pub fn bin_of(&self, phase: f64) -> usize {
        ((phase * self.bins as f64).floor() as usize).min(self.bins - 1)
    }

    pub fn bin_range(&self, bin: usize) -> PhaseInterval {
        PhaseInterval {
            start: bin as f64 / self.bins as f64,
            end: (bin + 1) as f64 / self.bins as f64,
        }
    }

    pub fn from_results(source: &str, target: &str, bins: usize, results: &[TransitionEpisodeResult]) -> Self {
        let mut p = Self::new(source, target, bins);
        let mut dur = vec![0.0; bins];
        for r in results.iter().filter(|r| r.source == source && r.target == target) {
            let b = p.bin_of(r.target_phase);
            p.counts[b] += 1;
            if r.success {
                p.successes[b] += 1;
                dur[b] += r.duration;
            }
        }
        for b in 0..bins {
            p.mean_durations[b] = if p.successes[b] > 0 { dur[b] / p.successes[b] as f64 } else { 0.0 };
        }
        p
    }

    /// Success rate of each bin; empty bins report zero.
    pub fn rates(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.successes)
            .map(|(&n, &k)| if n == 0 { 0.0 } else { k as f64 / n as f64 })
            .collect()
    }
}

/// Maximal runs of contiguous bins whose rate is at least `threshold`.
/// Empty bins never qualify.
pub fn find_optimal_intervals(profile: &PhaseProfile, threshold: f64) -> Vec<PhaseInterval> {
    let rates = profile.rates();
    let mut out: Vec<PhaseInterval> = Vec::new();
    let mut open: Option<usize> = None;
    for b in 0..=profile.bins {
        let good = b < profile.bins && profile.counts[b] > 0 && rates[b] >= threshold;
        match (good, open) {
            (true, None) => open = Some(b),
            (false, Some(start)) => {
                out.push(PhaseInterval {
                    start: profile.bin_range(start).start,
                    end: profile.bin_range(b - 1).end,
                });
                open = None;
            }
            _ => {}
        }
    }
    out
}

/// Movement direction of a skill from its mean velocity: +1, -1 or 0.
pub fn direction_of(mean_velocity: f64) -> i8 {
    if mean_velocity > 1e-6 {
        1
    } else if mean_velocity < -1e-6 {
        -1
    } else {
        0
    }
}

/// Mean successful-transition durations over same-direction and
/// reversed-direction pairs of travelling skills.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationSummary {
    pub same_direction_mean: f64,
    pub reversed_direction_mean: f64,
    pub same_pairs: usize,
    pub reversed_pairs: usize,
}

pub fn duration_summary(matrix: &SuccessMatrix, directions: &BTreeMap<String, i8>) -> DurationSummary {
    let mut same = Vec::new();
    let mut rev = Vec::new();
    for c in matrix.cells.iter().filter(|c| c.successes > 0) {
        let (Some(&a), Some(&b)) = (directions.get(&c.source), directions.get(&c.target)) else {
            continue;
        };
        match a * b {
            1 => same.push(c.mean_duration),
            -1 => rev.push(c.mean_duration),
            _ => {}
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    DurationSummary {
        same_direction_mean: mean(&same),
        reversed_direction_mean: mean(&rev),
        same_pairs: same.len(),
        reversed_pairs: rev.len(),
    }
}
