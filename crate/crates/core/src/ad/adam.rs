use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
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

/// Bias-corrected Adam with one pair of moment buffers per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &[Param], cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update `θ ← θ − lr · m̂ / (√v̂ + ε)`. A non-finite gradient aborts the
    /// whole step before any parameter or moment is touched.
    pub fn step(&mut self, params: &mut [Param], grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
        }
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam",
                format!(
                    "state tracks {} tensors, got {} params and {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if g.len() != p.value.len() || m.len() != g.len() {
                return Err(Error::shape(
                    "adam",
                    format!("`{}` has {} values, grad has {}", p.name, p.value.len(), g.len()),
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    param: p.name.clone(),
                });
            }
        }

        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((theta, &gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
