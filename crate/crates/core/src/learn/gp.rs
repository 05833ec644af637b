//! Gaussian process regression with a Matern-5/2 kernel, the surrogate
//! model behind Bayesian optimization.
//!
//! The prior mean is zero and observations are used unstandardized, so the
//! posterior mean decays toward zero away from the data. With at most a few
//! dozen training points a dense Cholesky factorization is plenty.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Kernel lengthscale. Parameters live in [-1, 1] per coordinate, so with
/// a few hundred dimensions typical distances are a few units; a large
/// lengthscale keeps the surrogate smooth across the whole box.
pub const LENGTHSCALE: f64 = 10.0;
/// Signal variance (kernel value at zero distance).
pub const SIGNAL_VAR: f64 = 1.0;
/// Diagonal jitter added to the training covariance for conditioning.
pub const JITTER: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("need at least one training point")]
    Empty,
    #[error("training set has {xs} inputs but {ys} observations")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("inconsistent input dimension: point {index} has {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("non-finite value in training data")]
    NonFinite,
}

/// Matern-5/2 covariance as a function of Euclidean distance.
#[derive(Clone, Copy, Debug)]
pub struct Matern52 {
    pub lengthscale: f64,
    pub signal_var: f64,
}

impl Default for Matern52 {
    fn default() -> Matern52 {
        Matern52 {
            lengthscale: LENGTHSCALE,
            signal_var: SIGNAL_VAR,
        }
    }
}

impl Matern52 {
    pub fn eval(&self, r: f64) -> f64 {
        let s = 5.0_f64.sqrt() * r / self.lengthscale;
        self.signal_var * (1.0 + s + s * s / 3.0) * (-s).exp()
    }

    /// k'(r) / r, finite at r = 0. Multiplying by (x - xi) gives the
    /// gradient of k(||x - xi||) with respect to x.
    pub fn grad_over_r(&self, r: f64) -> f64 {
        let l = self.lengthscale;
        let s = 5.0_f64.sqrt() * r / l;
        -self.signal_var * (5.0 / (3.0 * l * l)) * (1.0 + s) * (-s).exp()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fitted posterior over the objective.
#[derive(Debug)]
pub struct Gp {
    kernel: Matern52,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    /// (K + jitter I)^-1 y
    alpha: DVector<f64>,
}

impl Gp {
    pub fn fit(train_x: &[Vec<f64>], train_y: &[f64], kernel: Matern52) -> Result<Gp, GpError> {
        if train_x.is_empty() {
            return Err(GpError::Empty);
        }
        if train_x.len() != train_y.len() {
            return Err(GpError::LengthMismatch {
                xs: train_x.len(),
                ys: train_y.len(),
            });
        }
        let dim = train_x[0].len();
        for (index, x) in train_x.iter().enumerate() {
            if x.len() != dim {
                return Err(GpError::DimensionMismatch {
                    index,
                    expected: dim,
                    got: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(GpError::NonFinite);
            }
        }
        if train_y.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite);
        }

        let n = train_x.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(sq_dist(&train_x[i], &train_x[j]).sqrt());
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += JITTER;
        }
        let chol = k.cholesky().ok_or(GpError::NotPositiveDefinite)?;
        let alpha = chol.solve(&DVector::from_column_slice(train_y));
        Ok(Gp {
            kernel,
            train_x: train_x.to_vec(),
            train_y: train_y.to_vec(),
            chol,
            alpha,
        })
    }

    /// Training input with the highest observation; ties resolve to the
    /// earliest sample.
    pub fn best_input(&self) -> &[f64] {
        let mut best = 0;
        for (i, y) in self.train_y.iter().enumerate() {
            if *y > self.train_y[best] {
                best = i;
            }
        }
        &self.train_x[best]
    }

    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.train_x[0].len()
    }

    fn cross_cov(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.train_x.len(),
            self.train_x
                .iter()
                .map(|xi| self.kernel.eval(sq_dist(x, xi).sqrt())),
        )
    }

    /// Posterior mean and variance at `x`. Variance is clamped at zero;
    /// round-off can push the exact expression slightly negative.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let kx = self.cross_cov(x);
        let mean = kx.dot(&self.alpha);
        let w = self.chol.solve(&kx);
        let var = (self.kernel.eval(0.0) - kx.dot(&w)).max(0.0);
        (mean, var)
    }

    /// Posterior mean, variance, and their gradients with respect to `x`.
    pub fn posterior_with_grad(&self, x: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let kx = self.cross_cov(x);
        let mean = kx.dot(&self.alpha);
        let w = self.chol.solve(&kx);
        let var = (self.kernel.eval(0.0) - kx.dot(&w)).max(0.0);

        let d = x.len();
        let mut grad_mean = vec![0.0; d];
        let mut grad_var = vec![0.0; d];
        for (i, xi) in self.train_x.iter().enumerate() {
            let r = sq_dist(x, xi).sqrt();
            let coeff = self.kernel.grad_over_r(r);
            // grad of k(||x - xi||) is coeff * (x - xi)
            let a = self.alpha[i] * coeff;
            let b = -2.0 * w[i] * coeff;
            for j in 0..d {
                let diff = x[j] - xi[j];
                grad_mean[j] += a * diff;
                grad_var[j] += b * diff;
            }
        }
        (mean, var, grad_mean, grad_var)
    }
}

/// Upper confidence bound acquisition, the quantity Bayesian optimization
/// maximizes to choose the next evaluation.
pub const UCB_KAPPA: f64 = 3.0;

/// UCB value and gradient at `x`. The standard deviation's gradient blows
/// up as variance reaches zero, so it is suppressed below a floor; there
/// the acquisition is locally flat in sigma anyway.
pub fn ucb_with_grad(gp: &Gp, x: &[f64], kappa: f64) -> (f64, Vec<f64>) {
    let (mean, var, grad_mean, grad_var) = gp.posterior_with_grad(x);
    let sigma = var.sqrt();
    let value = mean + kappa * sigma;
    let mut grad = grad_mean;
    if sigma > 1e-12 {
        let scale = kappa / (2.0 * sigma);
        for (g, gv) in grad.iter_mut().zip(&grad_var) {
            *g += scale * gv;
        }
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matern_at_zero_is_signal_variance() {
        let k = Matern52::default();
        assert_eq!(k.eval(0.0), 1.0);
    }

    #[test]
    fn matern_at_one_lengthscale() {
        let k = Matern52::default();
        // (1 + sqrt(5) + 5/3) exp(-sqrt(5)), evaluated independently
        assert!((k.eval(10.0) - 0.5239941088318203).abs() < 1e-15);
    }

    #[test]
    fn matern_matches_closed_form_at_random_radii() {
        let k = Matern52 {
            lengthscale: 2.5,
            signal_var: 1.7,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let r: f64 = rng.gen_range(0.0..12.0);
            let s = 5.0_f64.sqrt() * r / 2.5;
            let expect = 1.7 * (1.0 + s + s * s / 3.0) * (-s).exp();
            assert!((k.eval(r) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_gradient_matches_finite_differences() {
        let k = Matern52::default();
        for &r in &[0.3, 1.0, 4.0, 9.0] {
            let eps = 1e-6;
            let fd = (k.eval(r + eps) - k.eval(r - eps)) / (2.0 * eps);
            assert!((k.grad_over_r(r) * r - fd).abs() < 1e-8, "r = {r}");
        }
    }

    #[test]
    fn single_point_posterior_mean() {
        // One observation y = 2 at the origin, queried one lengthscale
        // away: mean = 2 k(10) / (1 + jitter).
        let gp = Gp::fit(&[vec![0.0]], &[2.0], Matern52::default()).unwrap();
        let (mean, var) = gp.posterior(&[10.0]);
        assert!((mean - 1.047987169676471).abs() < 1e-14);
        let k10 = 0.5239941088318203;
        assert!((var - (1.0 - k10 * k10 / (1.0 + JITTER))).abs() < 1e-14);
    }

    /// Gaussian elimination with partial pivoting, independent of the
    /// Cholesky path used by the implementation.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m = a.to_vec();
        let mut rhs = b.to_vec();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                .unwrap();
            m.swap(col, pivot);
            rhs.swap(col, pivot);
            let lead = m[col].clone();
            for row in col + 1..n {
                let f = m[row][col] / lead[col];
                for (mk, lk) in m[row][col..].iter_mut().zip(&lead[col..]) {
                    *mk -= f * lk;
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut v = rhs[row];
            for k in row + 1..n {
                v -= m[row][k] * x[k];
            }
            x[row] = v / m[row][row];
        }
        x
    }

    #[test]
    fn posterior_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let kernel = Matern52::default();
        let n = 20;
        let d = 5;
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gp = Gp::fit(&xs, &ys, kernel).unwrap();

        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                k[i][j] = kernel.eval(sq_dist(&xs[i], &xs[j]).sqrt());
            }
            k[i][i] += JITTER;
        }

        for _ in 0..20 {
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let kx: Vec<f64> = xs.iter().map(|xi| kernel.eval(sq_dist(&q, xi).sqrt())).collect();
            let alpha = dense_solve(&k, &ys);
            let w = dense_solve(&k, &kx);
            let mean: f64 = kx.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let var = kernel.eval(0.0) - kx.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();

            let (m, v) = gp.posterior(&q);
            assert!((m - mean).abs() < 1e-8, "mean {m} vs oracle {mean}");
            assert!((v - var.max(0.0)).abs() < 1e-8, "var {v} vs oracle {var}");
        }
    }

    /// A short lengthscale keeps K well conditioned; the default
    /// lengthscale of 10 over [-1, 1]^d makes K nearly rank one, where
    /// interpolation error is dominated by the jitter, not the math.
    fn sharp_kernel() -> Matern52 {
        Matern52 {
            lengthscale: 0.6,
            signal_var: 1.3,
        }
    }

    #[test]
    fn posterior_interpolates_training_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gp = Gp::fit(&xs, &ys, sharp_kernel()).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            let (mean, var) = gp.posterior(x);
            assert!((mean - y).abs() < 1e-4);
            assert!((0.0..1e-4).contains(&var));
        }
    }

    #[test]
    fn posterior_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gp = Gp::fit(&xs, &ys, sharp_kernel()).unwrap();

        let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.9..0.9)).collect();
        let (_, _, gm, gv) = gp.posterior_with_grad(&q);
        let eps = 1e-6;
        for j in 0..4 {
            let mut hi = q.clone();
            let mut lo = q.clone();
            hi[j] += eps;
            lo[j] -= eps;
            let (mh, vh) = gp.posterior(&hi);
            let (ml, vl) = gp.posterior(&lo);
            assert!((gm[j] - (mh - ml) / (2.0 * eps)).abs() < 1e-6);
            assert!((gv[j] - (vh - vl) / (2.0 * eps)).abs() < 1e-6);
        }
    }

    #[test]
    fn ucb_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gp = Gp::fit(&xs, &ys, sharp_kernel()).unwrap();

        let q = vec![0.4, -0.2, 0.7];
        let (_, grad) = ucb_with_grad(&gp, &q, UCB_KAPPA);
        let eps = 1e-6;
        for j in 0..3 {
            let mut hi = q.clone();
            let mut lo = q.clone();
            hi[j] += eps;
            lo[j] -= eps;
            let (vh, _) = ucb_with_grad(&gp, &hi, UCB_KAPPA);
            let (vl, _) = ucb_with_grad(&gp, &lo, UCB_KAPPA);
            assert!((grad[j] - (vh - vl) / (2.0 * eps)).abs() < 1e-5);
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        let k = Matern52::default();
        assert_eq!(Gp::fit(&[], &[], k).unwrap_err(), GpError::Empty);
        assert_eq!(
            Gp::fit(&[vec![0.0]], &[1.0, 2.0], k).unwrap_err(),
            GpError::LengthMismatch { xs: 1, ys: 2 }
        );
        assert_eq!(
            Gp::fit(&[vec![0.0], vec![0.0, 1.0]], &[1.0, 2.0], k).unwrap_err(),
            GpError::DimensionMismatch {
                index: 1,
                expected: 1,
                got: 2
            }
        );
        assert_eq!(
            Gp::fit(&[vec![f64::NAN]], &[1.0], k).unwrap_err(),
            GpError::NonFinite
        );
        assert_eq!(
            Gp::fit(&[vec![0.0]], &[f64::INFINITY], k).unwrap_err(),
            GpError::NonFinite
        );
    }

    #[test]
    fn best_input_prefers_earliest_on_ties() {
        let xs = vec![vec![0.0], vec![0.3], vec![0.6], vec![0.9]];
        let gp = Gp::fit(&xs, &[1.0, 4.0, 4.0, 2.0], Matern52::default()).unwrap();
        assert_eq!(gp.best_input(), &[0.3]);
    }

    #[test]
    fn duplicate_points_survive_via_jitter() {
        // Identical inputs make K singular without the diagonal jitter.
        let xs = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let gp = Gp::fit(&xs, &[1.0, 1.0], Matern52::default()).unwrap();
        let (mean, _) = gp.posterior(&[0.5, 0.5]);
        assert!((mean - 1.0).abs() < 1e-4);
    }
}
