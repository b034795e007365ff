use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Mlp, Scalar};

/// Hidden layer widths used for every policy and value network.
pub const HIDDEN: [usize; 2] = [512, 256];
/// Initial exploration log standard deviation.
pub const INIT_LOG_STD: f64 = -1.0;
const LOG_STD_BOUNDS: (f64, f64) = (-5.0, 1.0);
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian policy with a state-independent learned log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<F: Scalar> {
    pub mean: Mlp<F>,
    pub log_std: Array1<F>,
}

impl<F: Scalar> PolicyNet<F> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Self {
            mean: Mlp::random(&sizes, 0.01, rng),
            log_std: Array1::from_elem(act_dim, F::of_f64(INIT_LOG_STD)),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_size()
    }

    pub fn act_dim(&self) -> usize {
        self.mean.output_size()
    }

    pub fn num_params(&self) -> usize {
        self.mean.num_params() + self.log_std.len()
    }

    /// Deterministic action means for a batch of (normalized) observations.
    pub fn forward(&self, obs: ArrayView2<F>) -> Array2<F> {
        self.mean.forward(obs)
    }

    /// Action mean for a single observation.
    pub fn forward_one(&self, obs: ArrayView1<F>) -> Array1<F> {
        let x = obs.insert_axis(ndarray::Axis(0));
        self.mean.forward(x).row(0).to_owned()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| v.as_f64().exp()).collect()
    }

    /// Log-density of `action` under N(mean, diag(std^2)), accumulated in f64.
    pub fn log_prob(&self, mean: ArrayView1<F>, action: ArrayView1<F>) -> f64 {
        let mut lp = 0.0;
        for d in 0..mean.len() {
            let ls = self.log_std[d].as_f64();
            let z = (action[d].as_f64() - mean[d].as_f64()) / ls.exp();
            lp += -0.5 * z * z - ls - HALF_LOG_2PI;
        }
        lp
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|v| v.as_f64() + 0.5 + HALF_LOG_2PI).sum()
    }

    /// Samples an action around `mean`.
    pub fn sample<R: Rng + ?Sized>(&self, mean: ArrayView1<F>, rng: &mut R) -> Array1<F> {
        let mut a = Array1::zeros(mean.len());
        for d in 0..mean.len() {
            let eps: f64 = StandardNormal.sample(rng);
            a[d] = F::of_f64(mean[d].as_f64() + self.log_std[d].as_f64().exp() * eps);
        }
        a
    }

    pub fn clamp_log_std(&mut self) {
        let (lo, hi) = LOG_STD_BOUNDS;
        self.log_std
            .mapv_inplace(|v| F::of_f64(v.as_f64().clamp(lo, hi)));
    }

    pub fn param_slices(&self) -> Vec<&[F]> {
        let mut s = self.mean.param_slices();
        s.push(self.log_std.as_slice().expect("contiguous"));
        s
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut s = self.mean.param_slices_mut();
        s.push(self.log_std.as_slice_mut().expect("contiguous"));
        s
    }

    pub fn flat_params(&self) -> Vec<F> {
        self.param_slices().into_iter().flatten().copied().collect()
    }

    pub fn set_flat_params(&mut self, flat: &[F]) {
        assert_eq!(flat.len(), self.num_params());
        let mut off = 0;
        for s in self.param_slices_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn cast<G: Scalar>(&self) -> PolicyNet<G> {
        PolicyNet {
            mean: self.mean.cast(),
            log_std: self.log_std.mapv(|v| G::of_f64(v.as_f64())),
        }
    }
}

/// State-value critic with the same backbone as the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet<F: Scalar> {
    pub net: Mlp<F>,
}

impl<F: Scalar> ValueNet<F> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            net: Mlp::random(&sizes, 1.0, rng),
        }
    }

    pub fn values(&self, obs: ArrayView2<F>) -> Vec<f64> {
        self.net.forward(obs).column(0).iter().map(|v| v.as_f64()).collect()
    }
}

/// Gradients of a policy with the same layout as [`PolicyNet::param_slices`].
pub struct PolicyGrad<F: Scalar> {
    pub mean: Mlp<F>,
    pub log_std: Array1<F>,
}

impl<F: Scalar> PolicyGrad<F> {
    pub fn slices(&self) -> Vec<&[F]> {
        let mut s = self.mean.param_slices();
        s.push(self.log_std.as_slice().expect("contiguous"));
        s
    }

    pub fn flat(&self) -> Vec<F> {
        self.slices().into_iter().flatten().copied().collect()
    }
}

/// A minibatch view for loss evaluation.
pub struct LossBatch<'a, F: Scalar> {
    pub obs: ArrayView2<'a, F>,
    pub actions: ArrayView2<'a, F>,
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// Clipped-surrogate diagnostics for one minibatch.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurrogateStats {
    pub loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub entropy: f64,
}

/// Loss `-mean(min(r A, clip(r, 1-eps, 1+eps) A)) - c_ent * H` and its
/// gradient with respect to the policy parameters.
pub fn surrogate_loss_and_grad<F: Scalar>(
    policy: &PolicyNet<F>,
    batch: &LossBatch<'_, F>,
    clip: f64,
    entropy_coef: f64,
) -> (SurrogateStats, PolicyGrad<F>) {
    let n = batch.obs.nrows();
    let nf = n as f64;
    let (mean, cache) = policy.mean.forward_cached(batch.obs);
    let act_dim = policy.act_dim();
    let std: Vec<f64> = policy.std();
    let mut grad_mean = Array2::<F>::zeros((n, act_dim));
    let mut grad_log_std = vec![0.0; act_dim];
    let mut loss = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let mut ratio_sum = 0.0;
    for i in 0..n {
        let lp = policy.log_prob(mean.row(i), batch.actions.row(i));
        let log_ratio = lp - batch.old_log_probs[i];
        let r = log_ratio.exp();
        let a = batch.advantages[i];
        let unclipped = r * a;
        let rc = r.clamp(1.0 - clip, 1.0 + clip);
        let clipped_obj = rc * a;
        let obj = unclipped.min(clipped_obj);
        loss -= obj / nf;
        kl += -log_ratio / nf;
        ratio_sum += r;
        if (r - rc).abs() > 0.0 {
            clipped += 1;
        }
        if unclipped <= clipped_obj {
            // d(-obj)/d lp
            let g = -a * r / nf;
            for d in 0..act_dim {
                let diff = batch.actions[[i, d]].as_f64() - mean[[i, d]].as_f64();
                let z = diff / std[d];
                grad_mean[[i, d]] = F::of_f64(g * diff / (std[d] * std[d]));
                grad_log_std[d] += g * (z * z - 1.0);
            }
        }
    }
    let entropy = policy.entropy();
    loss -= entropy_coef * entropy;
    for g in grad_log_std.iter_mut() {
        *g -= entropy_coef;
    }
    let grad = PolicyGrad {
        mean: policy.mean.backward(&cache, grad_mean),
        log_std: Array1::from_iter(grad_log_std.into_iter().map(|v| F::of_f64(v))),
    };
    (
        SurrogateStats {
            loss,
            approx_kl: kl,
            clip_fraction: clipped as f64 / nf,
            mean_ratio: ratio_sum / nf,
            entropy,
        },
        grad,
    )
}

/// Loss `0.5 * mean((V - R)^2)` and its gradient.
pub fn value_loss_and_grad<F: Scalar>(value: &ValueNet<F>, obs: ArrayView2<F>, returns: &[f64]) -> (f64, Mlp<F>) {
    let n = obs.nrows() as f64;
    let (out, cache) = value.net.forward_cached(obs);
    let mut g = Array2::<F>::zeros((obs.nrows(), 1));
    let mut loss = 0.0;
    for i in 0..obs.nrows() {
        let e = out[[i, 0]].as_f64() - returns[i];
        loss += 0.5 * e * e / n;
        g[[i, 0]] = F::of_f64(e / n);
    }
    (loss, value.net.backward(&cache, g))
}
