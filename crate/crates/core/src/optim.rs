//! Adam and SGD over lists of matrices, plus a cosine learning-rate schedule.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Added to the gradient as `wd * θ` before the moment updates.
    pub weight_decay: f64,
}

impl AdamConfig {
    /// The coefficient optimizer of the search.
    pub const ARCH: AdamConfig = AdamConfig {
        lr: 3e-4,
        beta1: 0.5,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 1e-3,
    };

    pub fn with_lr(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdConfig {
    /// The weight optimizer used when the search also trains weights.
    pub const WEIGHTS: SgdConfig = SgdConfig {
        lr: 0.025,
        momentum: 0.0,
        weight_decay: 5e-4,
    };
}

/// `lr_min + (lr_max - lr_min) (1 + cos(π t / total)) / 2`.
pub fn cosine_lr(lr_max: f64, lr_min: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr_max;
    }
    let t = step.min(total) as f64 / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + libm::cos(core::f64::consts::PI * t))
}

fn check_shapes(params: &[&mut Matrix], grads: &[&Matrix], state: Option<&[Matrix]>) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::InvalidParameter(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "optimizer step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
        if let Some(s) = state {
            if s[i].shape() != p.shape() {
                return Err(Error::Shape {
                    op: "optimizer state",
                    lhs: s[i].shape(),
                    rhs: p.shape(),
                });
            }
        }
    }
    Ok(())
}

/// Bias-corrected Adam moments for one group of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            step: 0,
        }
    }

    /// One update with learning rate `lr` (the schedule lives outside).
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix], lr: f64) -> Result<()> {
        check_shapes(params, grads, Some(&self.m))?;
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.config;
        let c1 = 1.0 - libm::pow(beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(beta2, self.step as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i] + weight_decay * pd[i];
                let mi = &mut m.data_mut()[i];
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                let vi = &mut v.data_mut()[i];
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = m.data()[i] / c1;
                let vhat = v.data()[i] / c2;
                pd[i] -= lr * mhat / (libm::sqrt(vhat) + eps);
            }
        }
        Ok(())
    }
}

/// Plain SGD with optional heavy-ball momentum and L2 weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub config: SgdConfig,
    pub buffers: Vec<Matrix>,
}

impl Sgd {
    pub fn new(config: SgdConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            config,
            buffers: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix], lr: f64) -> Result<()> {
        check_shapes(params, grads, Some(&self.buffers))?;
        let SgdConfig {
            momentum, weight_decay, ..
        } = self.config;
        for ((p, g), b) in params.iter_mut().zip(grads).zip(self.buffers.iter_mut()) {
            let pd = p.data_mut();
            let bd = b.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i] + weight_decay * pd[i];
                let d = if momentum != 0.0 {
                    bd[i] = momentum * bd[i] + gi;
                    bd[i]
                } else {
                    gi
                };
                pd[i] -= lr * d;
            }
        }
        Ok(())
    }
}
