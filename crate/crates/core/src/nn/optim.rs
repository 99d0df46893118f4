use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{Error, Result};

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
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaDeltaConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        Self {
            lr: 0.25,
            rho: 0.95,
            eps: 1e-6,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    AdamW(AdamWConfig),
    AdaDelta(AdaDeltaConfig),
}

/// One optimizer over one named parameter group.
///
/// For AdamW the two buffers are the first and second moments; for
/// AdaDelta they are the running averages of squared gradients and squared
/// updates.
pub struct Optimizer {
    kind: OptimizerKind,
    params: Vec<(String, Tensor)>,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: Vec<(String, Tensor)>) -> Self {
        let zeros = |p: &[(String, Tensor)]| p.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            first: zeros(&params),
            second: zeros(&params),
            kind,
            params,
            step: 0,
        }
    }

    pub fn adamw(cfg: AdamWConfig, params: Vec<(String, Tensor)>) -> Self {
        Self::new(OptimizerKind::AdamW(cfg), params)
    }

    pub fn adadelta(cfg: AdaDeltaConfig, params: Vec<(String, Tensor)>) -> Self {
        Self::new(OptimizerKind::AdaDelta(cfg), params)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn base_lr(&self) -> f64 {
        match self.kind {
            OptimizerKind::AdamW(c) => c.lr,
            OptimizerKind::AdaDelta(c) => c.lr,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(|(_, t)| t.zero_grad());
    }

    /// Multiplies every stored gradient by `factor`.
    pub fn scale_grads(&self, factor: f64) {
        for (_, t) in &self.params {
            if let Some(mut g) = t.grad() {
                g.iter_mut().for_each(|v| *v *= factor);
                t.set_grad(Some(g));
            }
        }
    }

    /// Applies one update with learning rate `lr`, reading each parameter's
    /// accumulated gradient (parameters without one are treated as zero).
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, lr: f64) -> Result<()> {
        let grads: Vec<Vec<f64>> = self
            .params
            .iter()
            .map(|(_, t)| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect();
        for ((name, _), g) in self.params.iter().zip(&grads) {
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient {bad} in parameter `{name}`")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        for (i, ((_, param), g)) in self.params.iter().zip(&grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            match self.kind {
                OptimizerKind::AdamW(c) => {
                    let bc1 = 1.0 - c.beta1.powi(t);
                    let bc2 = 1.0 - c.beta2.powi(t);
                    param.update_data(|w| {
                        for j in 0..w.len() {
                            w[j] *= 1.0 - lr * c.weight_decay;
                            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                            let m_hat = m[j] / bc1;
                            let v_hat = v[j] / bc2;
                            w[j] -= lr * m_hat / (v_hat.sqrt() + c.eps);
                        }
                    });
                }
                OptimizerKind::AdaDelta(c) => {
                    param.update_data(|w| {
                        for j in 0..w.len() {
                            let gj = g[j] + c.weight_decay * w[j];
                            m[j] = c.rho * m[j] + (1.0 - c.rho) * gj * gj;
                            let delta = (v[j] + c.eps).sqrt() / (m[j] + c.eps).sqrt() * gj;
                            v[j] = c.rho * v[j] + (1.0 - c.rho) * delta * delta;
                            w[j] -= lr * delta;
                        }
                    });
                }
            }
        }
        Ok(())
    }
}
