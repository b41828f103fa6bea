//! Parameter optimizers. Moments and updates run in f64; the updated
//! values are stored back into the f32 parameter blocks.

use serde::{Deserialize, Serialize};

use crate::nn::ParamBlock;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// One Adam parameter delta: updates the moment estimates in place and
/// returns the (negative) step to add to the parameter.
pub fn adam_delta(m: &mut f64, v: &mut f64, grad: f64, step: usize, lr: f64) -> f64 {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * grad;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * grad * grad;
    let m_hat = *m / (1.0 - ADAM_BETA1.powi(step as i32));
    let v_hat = *v / (1.0 - ADAM_BETA2.powi(step as i32));
    -lr * m_hat / (v_hat.sqrt() + ADAM_EPS)
}

pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, blocks: &[ParamBlock]) -> Self {
        let zeros = || blocks.iter().map(|b| vec![0.0; b.data.len()]).collect();
        Optimizer { kind, lr, step: 0, m: zeros(), v: zeros() }
    }

    /// Apply one update from mean gradients in block order.
    pub fn apply(&mut self, blocks: &mut [ParamBlock], grads: &[Vec<f64>]) {
        self.step += 1;
        for (bi, block) in blocks.iter_mut().enumerate() {
            for (i, w) in block.data.iter_mut().enumerate() {
                let g = grads[bi][i];
                let delta = match self.kind {
                    OptimizerKind::Adam => {
                        adam_delta(&mut self.m[bi][i], &mut self.v[bi][i], g, self.step, self.lr)
                    }
                    OptimizerKind::Sgd => -self.lr * g,
                };
                *w = (*w as f64 + delta) as f32;
            }
        }
    }
}
