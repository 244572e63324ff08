//! First-order optimizers.

use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{NgnnError, Result};

/// Applies one update to `params` given gradients of the same shapes.
pub trait Optimizer<T: Scalar> {
    fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()>;
    fn steps_taken(&self) -> u64;
}

fn check_shapes<T: Scalar>(params: &[Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(NgnnError::shape(
            "optimizer step",
            format!("{} params, {} grads", params.len(), grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(NgnnError::shape(
                "optimizer step",
                format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.003,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
        }
    }
}

/// Bias-corrected Adam. Moments are allocated lazily on the first step.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(NgnnError::Config(format!("learning rate {} must be > 0", config.lr)));
        }
        Ok(Adam {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        })
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        check_shapes(params, grads)?;
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape())
        {
            return Err(NgnnError::shape("adam", "parameter set changed between steps"));
        }
        self.t += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps, wd) = (T::of(c.lr), T::of(c.eps), T::of(c.weight_decay));
        let one = T::one();
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((pi, &gi), (mi, vi)) in it {
                let gi = gi + wd * *pi;
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// Plain stochastic gradient descent.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    t: u64,
}

impl Sgd {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(NgnnError::Config(format!("learning rate {lr} must be > 0")));
        }
        Ok(Sgd { lr, t: 0 })
    }
}

impl<T: Scalar> Optimizer<T> for Sgd {
    fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        check_shapes(params, grads)?;
        self.t += 1;
        let lr = T::of(self.lr);
        for (p, g) in params.iter_mut().zip(grads) {
            for (pi, &gi) in p.data_mut().iter_mut().zip(g.data()) {
                *pi -= lr * gi;
            }
        }
        Ok(())
    }

    fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// Optimizer selected at run time from a training config.
#[derive(Clone, Debug)]
pub enum OptimizerState<T> {
    Adam(Adam<T>),
    Sgd(Sgd),
}

impl<T: Scalar> Optimizer<T> for OptimizerState<T> {
    fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        match self {
            OptimizerState::Adam(a) => a.step(params, grads),
            OptimizerState::Sgd(s) => s.step(params, grads),
        }
    }

    fn steps_taken(&self) -> u64 {
        match self {
            OptimizerState::Adam(a) => a.steps_taken(),
            OptimizerState::Sgd(s) => <Sgd as Optimizer<T>>::steps_taken(s),
        }
    }
}
