use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use std::fmt::Debug;

/// Floating-point type usable for network parameters.
pub trait Scalar:
    Float + NumAssign + LinalgScalar + ScalarOperand + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
    fn of_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("representable")
    }
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

fn elu<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        x.exp() - F::one()
    }
}

/// Fully connected network: ELU on hidden layers, linear output.
/// Weights are stored `(fan_in, fan_out)` so a batch forward is `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F: Scalar> {
    pub sizes: Vec<usize>,
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache<F: Scalar> {
    /// Layer inputs; `inputs[0]` is the network input.
    inputs: Vec<Array2<F>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<F>>,
}

impl<F: Scalar> Mlp<F> {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let weights = sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect();
        let biases = sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    /// Uniform init with bound `gain * sqrt(3 / fan_in)`; the output layer is
    /// scaled by `output_gain`.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = net.weights.len();
        for (l, w) in net.weights.iter_mut().enumerate() {
            let fan_in = w.nrows() as f64;
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            let bound = gain * (3.0 / fan_in).sqrt();
            for v in w.iter_mut() {
                *v = F::of_f64(rng.random_range(-bound..=bound));
            }
        }
        net
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("sizes non-empty")
    }

    /// Analytic parameter count `sum (n_in + 1) * n_out`.
    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        assert_eq!(x.ncols(), self.input_size(), "input width mismatch");
        let last = self.weights.len() - 1;
        let mut h = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(elu);
            }
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> (Array2<F>, ForwardCache<F>) {
        assert_eq!(x.ncols(), self.input_size(), "input width mismatch");
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            z += b;
            inputs.push(h);
            if l < last {
                let a = z.mapv(elu);
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        (h, ForwardCache { inputs, pre })
    }

    /// Gradient of `sum(grad_out * output)` with respect to the parameters,
    /// returned as a network of the same shape.
    pub fn backward(&self, cache: &ForwardCache<F>, grad_out: Array2<F>) -> Mlp<F> {
        let mut grad = Mlp::zeros(&self.sizes);
        let mut g = grad_out;
        for l in (0..self.weights.len()).rev() {
            grad.weights[l] = cache.inputs[l].t().dot(&g).as_standard_layout().into_owned();
            grad.biases[l] = g.sum_axis(Axis(0));
            if l > 0 {
                let mut gin = g.dot(&self.weights[l].t());
                let z = &cache.pre[l - 1];
                ndarray::Zip::from(&mut gin).and(z).for_each(|gi, &zi| {
                    if zi <= F::zero() {
                        *gi = *gi * zi.exp();
                    }
                });
                g = gin;
            }
        }
        grad
    }

    pub fn param_slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
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

    pub fn cast<G: Scalar>(&self) -> Mlp<G> {
        Mlp {
            sizes: self.sizes.clone(),
            weights: self.weights.iter().map(|w| w.mapv(|v| G::of_f64(v.as_f64()))).collect(),
            biases: self.biases.iter().map(|b| b.mapv(|v| G::of_f64(v.as_f64()))).collect(),
        }
    }
}

/// Sum of squares over all parameter slices.
pub fn sq_norm<F: Scalar>(slices: &[&[F]]) -> f64 {
    slices.iter().flat_map(|s| s.iter()).map(|v| v.as_f64() * v.as_f64()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[5, 7, 3, 2]);
        let x = Array2::from_elem((4, 5), 0.7);
        assert!(net.forward(x.view()).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn param_count_matches_analytic() {
        let sizes = [110, 512, 256, 8];
        let net = Mlp::<f32>::zeros(&sizes);
        assert_eq!(net.num_params(), 110 * 512 + 512 + 512 * 256 + 256 + 256 * 8 + 8);
        assert_eq!(net.num_params(), Mlp::<f32>::param_count_for(&sizes));
    }

    #[test]
    fn positive_region_identity() {
        // single hidden unit, identity weights: ELU(x) = x for x > 0
        let mut net = Mlp::<f64>::zeros(&[1, 1, 1]);
        net.weights[0] = array![[1.0]];
        net.weights[1] = array![[1.0]];
        for x in [0.1, 0.5, 2.0, 10.0] {
            let y = net.forward(array![[x]].view());
            assert_eq!(y[[0, 0]], x);
        }
        let y = net.forward(array![[-1.0]].view());
        assert!((y[[0, 0]] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_init_and_forward() {
        let a = Mlp::<f32>::random(&[4, 16, 8, 2], 0.1, &mut ChaCha8Rng::seed_from_u64(3));
        let b = Mlp::<f32>::random(&[4, 16, 8, 2], 0.1, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let x = Array2::from_elem((3, 4), 0.25f32);
        assert_eq!(a.forward(x.view()), b.forward(x.view()));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = Mlp::<f64>::random(&[3, 5, 4, 2], 1.0, &mut rng);
        let x = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let w = Array2::from_shape_fn((6, 2), |(i, j)| ((i + 2 * j) as f64 * 0.71).cos());
        let loss = |n: &Mlp<f64>| (&n.forward(x.view()) * &w).sum();
        let (_, cache) = net.forward_cached(x.view());
        let grad = net.backward(&cache, w.clone()).flat_params();
        let base = net.flat_params();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let mut np = net.clone();
            np.set_flat_params(&p);
            p[i] -= 2.0 * h;
            let mut nm = net.clone();
            nm.set_flat_params(&p);
            let fd = (loss(&np) - loss(&nm)) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(err < 1e-4 || (fd - grad[i]).abs() < 1e-9, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }
}
