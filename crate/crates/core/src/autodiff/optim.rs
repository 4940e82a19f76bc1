//! Parameter update rules.

use std::collections::HashMap;

use super::Tensor;
use crate::error::{Result, SdrError};

/// Plain gradient descent.
pub struct Sgd {
    pub lr: f32,
}

impl Sgd {
    pub fn new(lr: f32) -> Sgd {
        Sgd { lr }
    }

    pub fn step(&self, params: &[Tensor]) -> Result<()> {
        for p in params {
            let g = p
                .grad()
                .ok_or_else(|| SdrError::Contract("sgd step on parameter without grad".into()))?;
            let lr = self.lr;
            p.apply_data(|data| {
                for (v, gv) in data.iter_mut().zip(&g) {
                    *v -= lr * gv;
                }
            });
        }
        Ok(())
    }
}

struct AdamSlot {
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
}

/// Adam with bias correction; per-parameter state persists across calls,
/// keyed by tensor identity.
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    state: HashMap<u64, AdamSlot>,
}

impl Adam {
    pub fn new(lr: f32) -> Adam {
        Adam::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f32, beta1: f32, beta2: f32, eps: f32) -> Adam {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            state: HashMap::new(),
        }
    }

    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        for p in params {
            let g = p
                .grad()
                .ok_or_else(|| SdrError::Contract("adam step on parameter without grad".into()))?;
            let slot = self.state.entry(p.id()).or_insert_with(|| AdamSlot {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
                t: 0,
            });
            slot.t += 1;
            let bc1 = 1.0 - self.beta1.powi(slot.t as i32);
            let bc2 = 1.0 - self.beta2.powi(slot.t as i32);
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
            let (m, v) = (&mut slot.m, &mut slot.v);
            p.apply_data(|data| {
                for i in 0..data.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    data[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}
