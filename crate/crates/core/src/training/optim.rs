//! Adam with a linearly decaying learning rate.

use crate::model::{Scalar, Tensor};

/// `lr * (1 - step / total)` for the 0-based `step`.
pub fn linear_lr(lr: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    lr * (1.0 - step as f64 / total as f64)
}

#[derive(Debug, Clone)]
pub struct Adam<F: Scalar = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
    t: i32,
}

impl<F: Scalar> Adam<F> {
    /// State shaped like `params`.
    pub fn new(params: &[Tensor<F>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One update; `grads[i] == None` leaves `params[i]` and its moments alone.
    pub fn step(&mut self, params: &mut [Tensor<F>], grads: &[Option<Tensor<F>>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let (one, eps) = (F::one(), F::of(self.eps));
        let step = F::of(lr / c1);
        let c2 = F::of(c2);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = grads.get(i).and_then(Option::as_ref) else {
                continue;
            };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                *x = *x - step * m[j] / ((v[j] / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_decays_to_zero() {
        assert_eq!(linear_lr(1e-3, 0, 10), 1e-3);
        assert!((linear_lr(1e-3, 5, 10) - 5e-4).abs() < 1e-18);
        assert_eq!(linear_lr(1e-3, 10, 10), 0.0);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut p = vec![Tensor::from_vec(1, 2, vec![1.0f64, -1.0])];
        let g = vec![Some(Tensor::from_vec(1, 2, vec![0.5, -2.0]))];
        let mut opt = Adam::new(&p);
        opt.step(&mut p, &g, 0.1);
        assert!((p[0].get(0, 0) - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))).abs() < 1e-12);
        assert!((p[0].get(0, 1) - (-1.0 + 0.1 * 2.0 / (2.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![Tensor::from_vec(1, 1, vec![3.0f64])];
        let mut opt = Adam::new(&p);
        for s in 0..500 {
            let g = vec![Some(Tensor::from_vec(1, 1, vec![2.0 * p[0].get(0, 0)]))];
            opt.step(&mut p, &g, linear_lr(0.1, s, 500));
        }
        assert!(p[0].get(0, 0).abs() < 1e-2);
    }
}
