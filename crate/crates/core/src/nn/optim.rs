//! Named parameter store and first-order optimizers.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Optimizer slots: SGD keeps `[velocity]`, Adam keeps `[m, v]`.
    pub state: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    params: Vec<Param>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor and returns its index.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::invalid(format!("duplicate parameter {name}")));
        }
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param {
            name,
            value,
            grad,
            state: Vec::new(),
        });
        Ok(self.params.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, i: usize) -> &Tensor {
        &self.params[i].value
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.params[i].value
    }

    pub fn grad(&self, i: usize) -> &Tensor {
        &self.params[i].grad
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn accumulate_grad(&mut self, i: usize, g: &Tensor) {
        self.params[i].grad.add_assign(g);
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.grad.sum_squares())
            .sum::<f64>()
            .sqrt()
    }

    /// Scales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for p in &mut self.params {
                p.grad.scale(k);
            }
        }
        norm
    }

    /// Rounds values and optimizer state to `f32` precision, so that a
    /// checkpoint (which stores `f32`) captures the state exactly.
    pub fn round_to_f32(&mut self) {
        let round = |t: &mut Tensor| {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        };
        for p in &mut self.params {
            round(&mut p.value);
            p.state.iter_mut().for_each(round);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// SGD only; 0 disables momentum.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            momentum,
            ..Self::adam(lr)
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            momentum: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    /// Completed update count (Adam's bias-correction step `t`).
    pub steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self { config, steps: 0 }
    }

    /// Applies one update from the current gradients, then zeroes them.
    pub fn step(&mut self, params: &mut ParameterSet) -> Result<()> {
        for p in params.iter() {
            if let Some(i) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in {} at entry {i}",
                    p.name
                )));
            }
        }
        self.steps += 1;
        let c = &self.config;
        match c.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    if c.momentum != 0.0 {
                        if p.state.is_empty() {
                            p.state.push(Tensor::zeros(p.value.shape()));
                        }
                        let vel = p.state[0].data_mut();
                        for ((w, g), v) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(vel) {
                            *v = c.momentum * *v + g;
                            *w -= c.lr * *v;
                        }
                    } else {
                        for (w, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                            *w -= c.lr * g;
                        }
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                for p in params.iter_mut() {
                    if p.state.is_empty() {
                        p.state.push(Tensor::zeros(p.value.shape()));
                        p.state.push(Tensor::zeros(p.value.shape()));
                    }
                    let (m_slot, v_slot) = p.state.split_at_mut(1);
                    let m = m_slot[0].data_mut();
                    let v = v_slot[0].data_mut();
                    for (k, (w, g)) in p.value.data_mut().iter_mut().zip(p.grad.data()).enumerate() {
                        m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                        v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        *w -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    }
                }
            }
        }
        params.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_set(value: f64, grad: f64) -> ParameterSet {
        let mut ps = ParameterSet::new();
        let i = ps.add("w", Tensor::vector(vec![value])).unwrap();
        ps.accumulate_grad(i, &Tensor::vector(vec![grad]));
        ps
    }

    #[test]
    fn sgd_basic() {
        let mut ps = scalar_set(1.0, 2.0);
        Optimizer::new(OptimizerConfig::sgd(0.1, 0.0)).step(&mut ps).unwrap();
        assert!((ps.value(0).data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(ps.grad(0).data(), &[0.0]);
    }

    #[test]
    fn zero_gradients_leave_params() {
        let mut ps = scalar_set(1.25, 0.0);
        Optimizer::new(OptimizerConfig::sgd(0.5, 0.0)).step(&mut ps).unwrap();
        assert_eq!(ps.value(0).data(), &[1.25]);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut ps = scalar_set(0.0, 1.0);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1, 0.9));
        opt.step(&mut ps).unwrap();
        ps.accumulate_grad(0, &Tensor::vector(vec![1.0]));
        opt.step(&mut ps).unwrap();
        // v1 = 1, v2 = 1.9 -> w = -0.1 - 0.19
        assert!((ps.value(0).data()[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_names_tensor() {
        let mut ps = scalar_set(1.0, f64::NAN);
        let err = Optimizer::new(OptimizerConfig::adam(1e-3)).step(&mut ps).unwrap_err();
        assert!(err.to_string().contains('w'));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut ps = ParameterSet::new();
        ps.add("a", Tensor::zeros(&[1])).unwrap();
        assert!(ps.add("a", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn clipping() {
        let mut ps = ParameterSet::new();
        let i = ps.add("a", Tensor::zeros(&[2])).unwrap();
        ps.accumulate_grad(i, &Tensor::vector(vec![3.0, 4.0]));
        assert_eq!(ps.clip_grad_norm(1.0), 5.0);
        assert!((ps.grad_norm() - 1.0).abs() < 1e-12);
    }
}
