use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};

/// Adam hyperparameters; defaults are the usual (0.9, 0.999, 1e-8).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = Gradients::zeros_like(net)
            .tensors()
            .into_iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            cfg,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn update(&mut self, net: &mut Mlp, grads: &Gradients, learning_rate: f64) {
        self.step += 1;
        let c1 = 1.0 - self.cfg.beta1.powi(self.step);
        let c2 = 1.0 - self.cfg.beta2.powi(self.step);
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        for (((param, grad), m), v) in net
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                param[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
