//! Bias-corrected Adam.

use crate::error::{GradError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one group of parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self { cfg, step: 0, m: zeros(), v: zeros() }
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. A non-finite gradient aborts before any
    /// parameter or moment is touched.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(GradError::Shape(format!(
                "adam tracks {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != p.shape() {
                return Err(GradError::Shape(format!(
                    "parameter {i}: param {:?}, grad {:?}, state {:?}",
                    p.shape(),
                    g.shape(),
                    self.m[i].shape()
                )));
            }
            if g.has_non_finite() {
                return Err(GradError::Diverged { param: i, step: self.step + 1 });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        adam.step(&mut params, &[Tensor::scalar(5.0)]).unwrap();
        // m̂ / √v̂ = 5 / 5 at t = 1
        let expected = 1.0 - 1e-3 * 5.0 / (5.0 + 1e-8);
        assert_eq!(params[0].item(), expected);
        assert!((params[0].item() - 0.999).abs() < 1e-11);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let init = Tensor::from_fn(3, 2, |r, c| r as f64 - 0.3 * c as f64);
        let mut params = vec![init.clone()];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        for _ in 0..100 {
            adam.step(&mut params, &[Tensor::zeros(3, 2)]).unwrap();
        }
        assert_eq!(params[0], init);
    }

    #[test]
    fn nan_gradient_diverges_without_mutation() {
        let mut params = vec![Tensor::scalar(2.0), Tensor::scalar(3.0)];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let err = adam.step(&mut params, &[Tensor::scalar(1.0), Tensor::scalar(f64::NAN)]).unwrap_err();
        assert_eq!(err, GradError::Diverged { param: 1, step: 1 });
        assert_eq!(params[0].item(), 2.0);
        assert_eq!(adam.step_count(), 0);
    }
}
