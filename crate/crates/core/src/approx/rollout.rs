use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::Scalar;
use super::normalizer::RunningNorm;
use super::ppo::{gae, RolloutBatch};
use super::policy::{PolicyNet, ValueNet};
use crate::error::TrainingError;

/// Result of one control step of an [`Env`].
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode ended in an absorbing state (no bootstrap).
    pub terminal: bool,
    /// Episode cut by a time limit (bootstrap from `obs`).
    pub truncated: bool,
    /// Episode-level success flag, read when the episode ends.
    pub success: bool,
}

/// An episodic control task driven by the PPO collector.
pub trait Env {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn step(&mut self, action: &[f64], rng: &mut ChaCha8Rng) -> Result<Transition, TrainingError>;
}

/// Summary of one finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub length: usize,
    pub success: bool,
    pub terminal: bool,
}

/// Steps a set of environments in lock-step, batching network evaluation.
pub struct VecCollector<E: Env> {
    pub envs: Vec<E>,
    rngs: Vec<ChaCha8Rng>,
    obs: Vec<Vec<f64>>,
    ep_reward: Vec<f64>,
    ep_len: Vec<usize>,
}

/// One collection pass.
pub struct Collected<F: Scalar> {
    pub batch: RolloutBatch<F>,
    pub episodes: Vec<EpisodeSummary>,
    pub mean_step_reward: f64,
}

impl<E: Env> VecCollector<E> {
    pub fn new(envs: Vec<E>, seed: u64) -> Self {
        let mut rngs: Vec<ChaCha8Rng> = (0..envs.len())
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(i as u64 + 1);
                r
            })
            .collect();
        let mut envs = envs;
        let obs = envs.iter_mut().zip(rngs.iter_mut()).map(|(e, r)| e.reset(r)).collect();
        let n = envs.len();
        Self {
            envs,
            rngs,
            obs,
            ep_reward: vec![0.0; n],
            ep_len: vec![0; n],
        }
    }

    /// Collects `steps` transitions from every environment with a stochastic
    /// policy, then updates `norm` with the raw observations seen.
    pub fn collect<F: Scalar>(
        &mut self,
        policy: &PolicyNet<F>,
        value: &ValueNet<F>,
        norm: &mut RunningNorm,
        steps: usize,
        gamma: f64,
        lambda: f64,
    ) -> Result<Collected<F>, TrainingError> {
        let ne = self.envs.len();
        let od = policy.obs_dim();
        let ad = policy.act_dim();
        let total = ne * steps;
        // env-major layout so every env's trajectory is contiguous
        let mut obs = Array2::<F>::zeros((total, od));
        let mut actions = Array2::<F>::zeros((total, ad));
        let mut log_probs = vec![0.0; total];
        let mut rewards = vec![0.0; total];
        let mut values = vec![0.0; total];
        let mut next_values = vec![0.0; total];
        let mut ends = vec![false; total];
        let mut raw: Vec<Vec<f64>> = Vec::with_capacity(total);
        let mut episodes = Vec::new();
        let mut step_obs = Array2::<F>::zeros((ne, od));
        let mut buf = vec![0f32; od];

        for t in 0..steps {
            for e in 0..ne {
                norm.normalize_into(&self.obs[e], &mut buf);
                for (k, v) in buf.iter().enumerate() {
                    step_obs[[e, k]] = F::of_f64(*v as f64);
                }
            }
            let means = policy.forward(step_obs.view());
            let vals = value.values(step_obs.view());
            for e in 0..ne {
                let row = e * steps + t;
                let a = policy.sample(means.row(e), &mut self.rngs[e]);
                log_probs[row] = policy.log_prob(means.row(e), a.view());
                obs.row_mut(row).assign(&step_obs.row(e));
                actions.row_mut(row).assign(&a);
                values[row] = vals[e];
                if t > 0 && !ends[row - 1] {
                    next_values[row - 1] = vals[e];
                }
                raw.push(self.obs[e].clone());
                let act: Vec<f64> = a.iter().map(|v| v.as_f64()).collect();
                let tr = self.envs[e].step(&act, &mut self.rngs[e])?;
                rewards[row] = tr.reward;
                self.ep_reward[e] += tr.reward;
                self.ep_len[e] += 1;
                if tr.terminal || tr.truncated {
                    ends[row] = true;
                    next_values[row] = if tr.terminal {
                        0.0
                    } else {
                        let o = norm.normalize(&tr.obs);
                        let x = Array2::from_shape_fn((1, od), |(_, k)| F::of_f64(o[k] as f64));
                        value.values(x.view())[0]
                    };
                    episodes.push(EpisodeSummary {
                        reward: self.ep_reward[e],
                        length: self.ep_len[e],
                        success: tr.success,
                        terminal: tr.terminal,
                    });
                    self.ep_reward[e] = 0.0;
                    self.ep_len[e] = 0;
                    self.obs[e] = self.envs[e].reset(&mut self.rngs[e]);
                } else {
                    self.obs[e] = tr.obs;
                }
            }
        }
        // bootstrap the unfinished tails
        for e in 0..ne {
            let row = e * steps + steps - 1;
            if !ends[row] {
                norm.normalize_into(&self.obs[e], &mut buf);
                let x = Array2::from_shape_fn((1, od), |(_, k)| F::of_f64(buf[k] as f64));
                next_values[row] = value.values(x.view())[0];
                ends[row] = true;
            }
        }
        let (advantages, returns) = gae(&rewards, &values, &next_values, &ends, gamma, lambda);
        norm.update(raw.iter().map(|r| r.as_slice()));
        let mean_step_reward = rewards.iter().sum::<f64>() / total.max(1) as f64;
        Ok(Collected {
            batch: RolloutBatch {
                obs,
                actions,
                log_probs,
                advantages,
                returns,
            },
            episodes,
            mean_step_reward,
        })
    }
}
