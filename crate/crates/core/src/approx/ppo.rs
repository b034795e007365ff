use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::{sq_norm, Scalar};
use super::policy::{surrogate_loss_and_grad, value_loss_and_grad, LossBatch, PolicyNet, ValueNet};
use crate::error::TrainingError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    /// Learning rate at the final iteration as a fraction of the initial one.
    pub final_lr_fraction: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Early-stop the epoch loop once the approximate KL exceeds this.
    pub target_kl: Option<f64>,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            final_lr_fraction: 0.0,
            epochs: 5,
            minibatch_size: 512,
            entropy_coef: 0.0,
            max_grad_norm: 1.0,
            target_kl: None,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    /// Linearly decayed learning rate for iteration `it` of `total`.
    pub fn lr_at(&self, it: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.learning_rate;
        }
        let frac = it as f64 / (total - 1) as f64;
        self.learning_rate * (1.0 - frac * (1.0 - self.final_lr_fraction))
    }
}

/// Generalized advantage estimates over a flat sequence of transitions.
///
/// `next_values[t]` is the bootstrap value of the successor state: zero for
/// terminal steps, the value of the final observation for truncated steps,
/// and `V(s_{t+1})` otherwise. `segment_end[t]` cuts the recursion at
/// episode or rollout boundaries. Returns `(advantages, returns)`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    segment_end: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && next_values.len() == n && segment_end.len() == n);
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        if segment_end[t] {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Flattened on-policy data ready for an update.
#[derive(Debug, Clone)]
pub struct RolloutBatch<F: Scalar> {
    /// Normalized observations, one row per transition.
    pub obs: Array2<F>,
    pub actions: Array2<F>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl<F: Scalar> RolloutBatch<F> {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-update diagnostics averaged over minibatches.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    /// Mean probability ratio of the first minibatch of the first epoch.
    pub first_ratio: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Policy, critic and their optimizer states.
#[derive(Debug, Clone)]
pub struct Learner<F: Scalar> {
    pub policy: PolicyNet<F>,
    pub value: ValueNet<F>,
    pub policy_opt: Adam,
    pub value_opt: Adam,
}

impl<F: Scalar> Learner<F> {
    pub fn new(policy: PolicyNet<F>, value: ValueNet<F>) -> Self {
        let policy_opt = Adam::new(policy.num_params());
        let value_opt = Adam::new(value.net.num_params());
        Self {
            policy,
            value,
            policy_opt,
            value_opt,
        }
    }

    /// Runs the clipped-surrogate update over `batch`.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &RolloutBatch<F>,
        cfg: &PpoConfig,
        lr: f64,
        iteration: usize,
        rng: &mut R,
    ) -> Result<UpdateStats, TrainingError> {
        let n = batch.len();
        if n == 0 {
            return Ok(UpdateStats::default());
        }
        let mut adv = batch.advantages.clone();
        if cfg.normalize_advantages && n > 1 {
            let mean = adv.iter().sum::<f64>() / n as f64;
            let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            for a in adv.iter_mut() {
                *a = (*a - mean) / (std + 1e-8);
            }
        }
        let mb = cfg.minibatch_size.clamp(1, n);
        let mut idx: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats::default();
        let mut first = true;
        'epochs: for _ in 0..cfg.epochs {
            idx.shuffle(rng);
            for chunk in idx.chunks(mb) {
                let obs = batch.obs.select(Axis(0), chunk);
                let act = batch.actions.select(Axis(0), chunk);
                let olp: Vec<f64> = chunk.iter().map(|&i| batch.log_probs[i]).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let ret: Vec<f64> = chunk.iter().map(|&i| batch.returns[i]).collect();
                let lb = LossBatch {
                    obs: obs.view(),
                    actions: act.view(),
                    old_log_probs: &olp,
                    advantages: &a,
                    returns: &ret,
                };
                let (s, pg) = surrogate_loss_and_grad(&self.policy, &lb, cfg.clip, cfg.entropy_coef);
                let (vl, vg) = value_loss_and_grad(&self.value, obs.view(), &ret);
                if !s.loss.is_finite() || !vl.is_finite() {
                    return Err(TrainingError::Divergence {
                        iteration,
                        detail: format!("non-finite loss (policy {}, value {})", s.loss, vl),
                    });
                }
                if first {
                    stats.first_ratio = s.mean_ratio;
                    first = false;
                }
                let pnorm = sq_norm(&pg.slices()).sqrt();
                let vnorm = sq_norm(&vg.param_slices()).sqrt();
                if !pnorm.is_finite() || !vnorm.is_finite() {
                    return Err(TrainingError::Divergence {
                        iteration,
                        detail: "non-finite gradient".into(),
                    });
                }
                let pscale = clip_scale(pnorm, cfg.max_grad_norm);
                let vscale = clip_scale(vnorm, cfg.max_grad_norm);
                self.policy_opt
                    .step(self.policy.param_slices_mut(), pg.slices(), lr, pscale);
                self.value_opt
                    .step(self.value.net.param_slices_mut(), vg.param_slices(), lr, vscale);
                self.policy.clamp_log_std();

                stats.policy_loss += s.loss;
                stats.value_loss += vl;
                stats.approx_kl += s.approx_kl;
                stats.clip_fraction += s.clip_fraction;
                stats.entropy += s.entropy;
                stats.grad_norm += pnorm;
                stats.minibatches += 1;
                if let Some(tk) = cfg.target_kl {
                    if s.approx_kl > 1.5 * tk {
                        break 'epochs;
                    }
                }
            }
        }
        let k = stats.minibatches.max(1) as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.approx_kl /= k;
        stats.clip_fraction /= k;
        stats.entropy /= k;
        stats.grad_norm /= k;
        Ok(stats)
    }
}

fn clip_scale(norm: f64, max_norm: f64) -> f64 {
    if norm > max_norm && norm > 0.0 {
        max_norm / norm
    } else {
        1.0
    }
}
