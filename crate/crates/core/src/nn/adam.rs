use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{LayerParams, Tensor};
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 8e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moments. Moment buffers are created on the first
/// step and must see the same parameter layout afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut LayerParams]) -> Result<()> {
        let tensors = params.len() * 2;
        if self.step == 0 {
            self.first.clear();
            self.second.clear();
            for p in params.iter() {
                for len in [p.weights.len(), p.biases.len()] {
                    self.first.push(vec![0.0; len]);
                    self.second.push(vec![0.0; len]);
                }
            }
        } else if self.first.len() != tensors {
            return Err(Error::ShapeError(format!(
                "optimizer tracks {} tensors, got {tensors}",
                self.first.len()
            )));
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.config;
        let t = self.step.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - math::powi(beta1, t);
        let c2 = 1.0 - math::powi(beta2, t);
        for (i, p) in params.iter_mut().enumerate() {
            let LayerParams { weights, biases, weight_grad, bias_grad } = &mut **p;
            let pairs: [(&mut Tensor, &Tensor); 2] = [(weights, weight_grad), (biases, bias_grad)];
            for (j, (value, grad)) in pairs.into_iter().enumerate() {
                let (m, v) = (&mut self.first[2 * i + j], &mut self.second[2 * i + j]);
                if m.len() != value.len() {
                    return Err(Error::ShapeError(format!(
                        "optimizer moment has {} entries, parameter has {}",
                        m.len(),
                        value.len()
                    )));
                }
                for (((x, &g), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = beta1 * *mi + (1.0 - beta1) * g;
                    *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                    let m_hat = *mi / c1;
                    let v_hat = *vi / c2;
                    *x -= learning_rate * m_hat / (math::sqrt(v_hat) + eps);
                }
            }
        }
        Ok(())
    }
}
