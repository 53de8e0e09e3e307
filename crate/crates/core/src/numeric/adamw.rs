use serde::{Deserialize, Serialize};

use super::{NumericError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-2 }
    }
}

/// Adam moments with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamWState {
    pub fn new<'a>(config: AdamWConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (m, v) = params.into_iter().map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape()))).unzip();
        Self { config, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: `p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), NumericError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NumericError::ShapeMismatch {
                op: "adamw_step",
                left: vec![self.m.len()],
                right: vec![params.len(), grads.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NumericError::ShapeMismatch {
                    op: "adamw_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(NumericError::NonFiniteGradient);
            }
        }
        self.step += 1;
        let AdamWConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pd = p.data_mut();
            for (((pi, &gi), mi), vi) in pd.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi = *pi - lr * m_hat / (v_hat.sqrt() + eps) - lr * weight_decay * *pi;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(wd: f64) -> AdamWConfig {
        AdamWConfig { weight_decay: wd, ..AdamWConfig::default() }
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = Tensor::scalar(1.0);
        let mut state = AdamWState::new(cfg(0.01), [&p]);
        state.step(&mut [&mut p], &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(p.data()[0], 1.0 * (1.0 - 3e-4 * 0.01));
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = Tensor::scalar(0.0);
        let mut state = AdamWState::new(AdamWConfig { lr: 3e-3, ..cfg(0.0) }, [&p]);
        for _ in 0..10_000 {
            let g = Tensor::scalar(2.0 * (p.data()[0] - 5.0));
            state.step(&mut [&mut p], &[g]).unwrap();
        }
        assert!((p.data()[0] - 5.0).abs() < 1e-3, "p = {}", p.data()[0]);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = Tensor::row(vec![0.3, -0.7]);
        let mut b = a.clone();
        let mut state = AdamWState::new(cfg(0.01), [&a, &b]);
        for k in 0..5 {
            let g = Tensor::row(vec![0.1 * k as f64, -0.2]);
            state.step(&mut [&mut a, &mut b], &[g.clone(), g]).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn without_decay_matches_plain_adam() {
        let mut p = Tensor::row(vec![1.0, -2.0, 0.5]);
        let mut state = AdamWState::new(cfg(0.0), [&p]);
        let (mut m, mut v, mut q) = ([0.0; 3], [0.0; 3], [1.0, -2.0, 0.5]);
        for t in 1..=20 {
            let g: Vec<f64> = q.iter().map(|x: &f64| x.sin() + 0.1 * t as f64).collect();
            for i in 0..3 {
                m[i] = 0.9 * m[i] + 0.1 * g[i];
                v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
                let mh = m[i] / (1.0 - 0.9f64.powi(t));
                let vh = v[i] / (1.0 - 0.999f64.powi(t));
                q[i] -= 3e-4 * mh / (vh.sqrt() + 1e-8);
            }
            state.step(&mut [&mut p], &[Tensor::row(g)]).unwrap();
        }
        assert_eq!(p.data(), &q);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut p = Tensor::row(vec![1.0, 2.0]);
        let mut state = AdamWState::new(cfg(0.0), [&p]);
        assert!(matches!(
            state.step(&mut [&mut p], &[Tensor::row(vec![1.0])]),
            Err(NumericError::ShapeMismatch { .. })
        ));
        assert_eq!(state.step(&mut [&mut p], &[Tensor::row(vec![f64::NAN, 0.0])]), Err(NumericError::NonFiniteGradient));
    }
}
