use std::f64::consts::PI;

use super::param::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// Optimizer with per-parameter moment estimates.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    pub learning_rate: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &ParamSet) -> Self {
        let moments = |_: ()| params.iter().map(|p| Tensor::zeros_like(&p.value)).collect();
        Optimizer {
            kind,
            learning_rate,
            first: moments(()),
            second: moments(()),
            step: 0,
        }
    }

    pub fn adam(learning_rate: f64, params: &ParamSet) -> Self {
        Self::new(OptimizerKind::adam(), learning_rate, params)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *v -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for ((p, m), s) in params.iter_mut().zip(self.first.iter_mut()).zip(self.second.iter_mut()) {
                    if m.shape() != p.value.shape() {
                        return Err(Error::shape(format!(
                            "moment {:?} vs parameter {:?} ({})",
                            m.shape(),
                            p.value.shape(),
                            p.name
                        )));
                    }
                    let grads = p.grad.data();
                    let iter = p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(grads)
                        .zip(m.data_mut().iter_mut().zip(s.data_mut().iter_mut()));
                    for ((v, &g), (mv, sv)) in iter {
                        *mv = beta1 * *mv + (1.0 - beta1) * g;
                        *sv = beta2 * *sv + (1.0 - beta2) * g * g;
                        let m_hat = *mv / c1;
                        let s_hat = *sv / c2;
                        *v -= lr * m_hat / (s_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        params.zero_grad();
        Ok(())
    }
}

/// Cosine-annealed learning rate `lr0 · ½(1 + cos(π·epoch/total))`.
pub fn cosine_anneal(lr0: f64, epoch: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("cosine schedule over zero epochs"));
    }
    if epoch > total {
        return Err(Error::invalid(format!("epoch {epoch} beyond schedule length {total}")));
    }
    Ok(lr0 * 0.5 * (1.0 + (PI * epoch as f64 / total as f64).cos()))
}
