use super::Tensor;
use crate::error::{Error, Result};

/// Moment estimates and hyperparameters for the Adam optimizer.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Adam with the usual defaults `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of every parameter from its gradient.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("adam_step", &[params.len()], &[grads.len()]));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::dim("adam_step", &[self.m.len()], &[params.len()]));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.numel() != g.len() || p.numel() != m.len() {
                return Err(Error::dim("adam_step", p.shape(), &[g.len()]));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::matrix(1, 3, vec![1.0, -2.0, 3.0]).unwrap()];
        let mut adam = AdamState::new(0.1);
        for _ in 0..5 {
            adam.step(&mut p, &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(p[0].data(), &[1.0, -2.0, 3.0]);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut p = vec![Tensor::scalar(0.5)];
        let mut adam = AdamState::new(0.0);
        adam.step(&mut p, &[vec![3.0]]).unwrap();
        assert_eq!(p[0].data(), &[0.5]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t = 1: m = 0.1, v = 0.001, mhat = vhat = 1, so the step is lr / (1 + eps).
        let mut p = vec![Tensor::scalar(0.0)];
        let mut adam = AdamState::new(1e-4);
        adam.step(&mut p, &[vec![1.0]]).unwrap();
        let expected = -1e-4 / (1.0 + 1e-8);
        assert!((p[0].data()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![Tensor::scalar(0.0)];
        let mut adam = AdamState::new(1e-3);
        assert!(matches!(
            adam.step(&mut p, &[vec![1.0, 2.0]]),
            Err(Error::Dimension { .. })
        ));
        assert_eq!(adam.steps(), 0);
    }
}
