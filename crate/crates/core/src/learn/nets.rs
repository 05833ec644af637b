//! Dense feedforward networks with manual backprop, plus an
//! adaptive-moment gradient optimizer. Sized for the critic (a few
//! thousand weights), so plain Vec arithmetic is fast enough.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fully connected net: ReLU after every layer except the last, which is
/// linear. Parameters are a flat vector, per layer the weight matrix
/// row-major (input x output) followed by the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer intermediates from a cached forward pass: the input to each
/// layer and its pre-activation.
pub struct MlpCache {
    layer_inputs: Vec<Vec<f64>>,
    pre_acts: Vec<Vec<f64>>,
}

pub struct MlpGrads {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn zeros(sizes: &[usize]) -> Mlp {
        assert!(sizes.len() >= 2, "need at least one layer");
        Mlp {
            params: vec![0.0; Mlp::param_count(sizes)],
            sizes: sizes.to_vec(),
        }
    }

    /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
    pub fn random(sizes: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
        let mut net = Mlp::zeros(sizes);
        let mut off = 0;
        for w in net.sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[off..off + w[0] * w[1] + w[1]] {
                *p = rng.gen_range(-bound..=bound);
            }
            off += w[0] * w[1] + w[1];
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Blend `other` into self: p := blend * other + (1 - blend) * p.
    /// This is the target-network soft update.
    pub fn blend_from(&mut self, other: &Mlp, blend: f64) {
        assert_eq!(self.sizes, other.sizes);
        for (p, o) in self.params.iter_mut().zip(&other.params) {
            *p += blend * (o - *p);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        assert_eq!(x.len(), self.sizes[0], "input width mismatch");
        let n_layers = self.sizes.len() - 1;
        let mut cache = MlpCache {
            layer_inputs: Vec::with_capacity(n_layers),
            pre_acts: Vec::with_capacity(n_layers),
        };
        let mut a = x.to_vec();
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;

            let mut z = bias.to_vec();
            for (i, ai) in a.iter().enumerate() {
                if *ai != 0.0 {
                    let row = &weights[i * n_out..(i + 1) * n_out];
                    for (zj, wj) in z.iter_mut().zip(row) {
                        *zj += ai * wj;
                    }
                }
            }
            cache.layer_inputs.push(a);
            cache.pre_acts.push(z.clone());
            if l + 1 < n_layers {
                for v in z.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            a = z;
        }
        (a, cache)
    }

    /// Backpropagate `grad_out` (gradient of the loss with respect to the
    /// linear output) through the cached pass.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64]) -> MlpGrads {
        let n_layers = self.sizes.len() - 1;
        assert_eq!(grad_out.len(), self.output_len());

        let mut layer_offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            layer_offsets.push(off);
            off += w[0] * w[1] + w[1];
        }

        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = layer_offsets[l];
            let a = &cache.layer_inputs[l];
            let weights = &self.params[off..off + n_in * n_out];
            let (w_grads, b_grads) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            b_grads.copy_from_slice(&delta);
            let mut prev_delta = vec![0.0; n_in];
            for i in 0..n_in {
                let row = &weights[i * n_out..(i + 1) * n_out];
                let g_row = &mut w_grads[i * n_out..(i + 1) * n_out];
                let ai = a[i];
                let mut acc = 0.0;
                for j in 0..n_out {
                    g_row[j] = ai * delta[j];
                    acc += row[j] * delta[j];
                }
                prev_delta[i] = acc;
            }
            if l > 0 {
                for (d, z) in prev_delta.iter_mut().zip(&cache.pre_acts[l - 1]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = prev_delta;
        }
        MlpGrads {
            params: grads,
            input: delta,
        }
    }
}

/// Adaptive-moment gradient descent. `step` moves `params` against the
/// gradient; callers maximizing an objective pass the negated gradient.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn param_count_sums_layers() {
        assert_eq!(Mlp::param_count(&[3, 4, 2]), 3 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(Mlp::param_count(&[7, 128, 64, 1]), 7 * 128 + 128 + 128 * 64 + 64 + 64 + 1);
    }

    #[test]
    fn zero_net_maps_everything_to_zero() {
        let net = Mlp::zeros(&[5, 8, 3]);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5, 3.0, -1.0]), vec![0.0; 3]);
    }

    #[test]
    fn forward_matches_hand_computation() {
        // [2, 2, 1]: W1 = [[1, -1], [2, 0]], b1 = [0.5, 0], W2 = [[3], [1]], b2 = [-0.25]
        let mut net = Mlp::zeros(&[2, 2, 1]);
        net.params_mut().copy_from_slice(&[
            1.0, -1.0, 2.0, 0.0, 0.5, 0.0, // layer 1
            3.0, 1.0, -0.25, // layer 2
        ]);
        // x = (1, 0.5): z1 = (1*1 + 0.5*2 + 0.5, 1*-1 + 0) = (2.5, -1)
        // relu -> (2.5, 0); out = 2.5*3 + 0*1 - 0.25 = 7.25
        let y = net.forward(&[1.0, 0.5]);
        assert!((y[0] - 7.25).abs() < 1e-12);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::random(&[16, 8, 1], &mut rng);
        let bound1 = 1.0 / 4.0;
        for &p in &net.params()[..16 * 8 + 8] {
            assert!(p.abs() <= bound1);
        }
        assert!(net.params().iter().any(|p| *p != 0.0));
    }

    fn numeric_grads(net: &Mlp, x: &[f64], grad_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        // Loss = grad_out . output, so its exact gradient is what backward
        // should produce.
        let loss = |net: &Mlp, x: &[f64]| -> f64 {
            net.forward(x)
                .iter()
                .zip(grad_out)
                .map(|(o, g)| o * g)
                .sum()
        };
        let eps = 1e-6;
        let mut gp = vec![0.0; net.params().len()];
        let mut probe = net.clone();
        for (i, slot) in gp.iter_mut().enumerate() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + eps;
            let hi = loss(&probe, x);
            probe.params_mut()[i] = orig - eps;
            let lo = loss(&probe, x);
            probe.params_mut()[i] = orig;
            *slot = (hi - lo) / (2.0 * eps);
        }
        let mut gx = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut hi_x = x.to_vec();
            let mut lo_x = x.to_vec();
            hi_x[i] += eps;
            lo_x[i] -= eps;
            gx[i] = (loss(net, &hi_x) - loss(net, &lo_x)) / (2.0 * eps);
        }
        (gp, gx)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::random(&[4, 6, 3, 2], &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad_out = vec![0.7, -1.3];

        let (_, cache) = net.forward_cached(&x);
        let g = net.backward(&cache, &grad_out);
        let (np, nx) = numeric_grads(&net, &x, &grad_out);
        for (a, b) in g.params.iter().zip(&np) {
            assert!((a - b).abs() < 1e-6, "param grad {a} vs {b}");
        }
        for (a, b) in g.input.iter().zip(&nx) {
            assert!((a - b).abs() < 1e-6, "input grad {a} vs {b}");
        }
    }

    #[test]
    fn relu_blocks_gradient_through_dead_units() {
        // One hidden unit driven negative: its incoming weights get zero
        // gradient.
        let mut net = Mlp::zeros(&[1, 1, 1]);
        net.params_mut().copy_from_slice(&[1.0, -5.0, 2.0, 0.0]);
        let (y, cache) = net.forward_cached(&[1.0]);
        assert_eq!(y[0], 0.0); // relu(1 - 5) = 0
        let g = net.backward(&cache, &[1.0]);
        assert_eq!(g.params[0], 0.0); // dW1
        assert_eq!(g.params[1], 0.0); // db1
        assert_eq!(g.input[0], 0.0);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut opt = Adam::new(2, 0.01);
        let mut p = vec![1.0, 1.0];
        opt.step(&mut p, &[0.5, -2.0]);
        // First step: m_hat/sqrt(v_hat) = sign(g) up to eps.
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((p[1] - (1.0 + 0.01)).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut opt = Adam::new(1, 0.1);
        let mut p = vec![-2.0];
        for _ in 0..500 {
            let g = 2.0 * (p[0] - 3.0);
            opt.step(&mut p, &[g]);
        }
        assert!((p[0] - 3.0).abs() < 0.05, "got {}", p[0]);
    }

    #[test]
    fn blend_from_interpolates() {
        let mut a = Mlp::zeros(&[1, 1]);
        let mut b = Mlp::zeros(&[1, 1]);
        b.params_mut().copy_from_slice(&[10.0, 20.0]);
        a.blend_from(&b, 0.25);
        assert_eq!(a.params(), &[2.5, 5.0]);
        a.blend_from(&b, 1.0);
        assert_eq!(a.params(), b.params());
    }
}
