use super::mlp::Scalar;

/// Adam over a fixed list of parameter slices.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Applies one step. `grads` is scaled by `grad_scale` first (used for
    /// norm clipping).
    pub fn step<F: Scalar>(&mut self, params: Vec<&mut [F]>, grads: Vec<&[F]>, lr: f64, grad_scale: f64) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut off = 0;
        for (p, g) in params.into_iter().zip(grads) {
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                let gi = g[i].as_f64() * grad_scale;
                let k = off + i;
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                let mhat = self.m[k] / bc1;
                let vhat = self.v[k] / bc2;
                let upd = lr * mhat / (vhat.sqrt() + self.eps);
                p[i] = p[i] - F::of_f64(upd);
            }
            off += p.len();
        }
        debug_assert_eq!(off, self.m.len());
    }
}
