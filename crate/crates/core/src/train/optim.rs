//! Optimizers and learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub const POLY_POWER: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptKind {
    Sgd,
    Lars,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Poly,
    Cosine,
}

/// Learning rate at `step` of `total` steps. Poly decays as
/// base * (1 - step/total)^0.9; cosine as base * 0.5 * (1 + cos(pi t)).
pub fn lr_schedule(kind: ScheduleKind, base: f64, step: usize, total: usize) -> f64 {
    assert!(total > 0, "lr_schedule: total steps must be positive");
    assert!(step <= total, "lr_schedule: step {step} beyond total {total}");
    let t = step as f64 / total as f64;
    match kind {
        ScheduleKind::Poly => base * (1.0 - t).powf(POLY_POWER),
        ScheduleKind::Cosine => base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()),
    }
}

/// SGD or LARS with momentum and weight decay. LARS scales each parameter's
/// local learning rate by the trust ratio ||w|| / (||g|| + wd*||w|| + eps)
/// times the trust coefficient; parameters or gradients with zero norm fall
/// back to a ratio of one so zero-initialised tensors can still move.
pub struct Optimizer {
    pub kind: OptKind,
    pub momentum: f64,
    pub weight_decay: f64,
    pub trust_coefficient: f64,
    pub eps: f64,
    velocity: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptKind, params: &[(String, Tensor)], momentum: f64, weight_decay: f64, trust_coefficient: f64) -> Optimizer {
        Optimizer {
            kind,
            momentum,
            weight_decay,
            trust_coefficient,
            eps: 1e-9,
            velocity: params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect(),
        }
    }

    /// One update from the parameters' accumulated gradients. Gradients are
    /// not cleared here.
    pub fn step(&mut self, params: &[(String, Tensor)], lr: f64) {
        assert_eq!(params.len(), self.velocity.len(), "optimizer state does not match params");
        for ((_, p), vel) in params.iter().zip(self.velocity.iter_mut()) {
            let grad = p.grad_or_zeros();
            let w = p.data();
            let local_lr = match self.kind {
                OptKind::Sgd => lr,
                OptKind::Lars => {
                    let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let trust = if wn > 0.0 && gn > 0.0 {
                        wn / (gn + self.weight_decay * wn + self.eps)
                    } else {
                        1.0
                    };
                    lr * self.trust_coefficient * trust
                }
            };
            let mut new_w = w.as_ref().clone();
            for i in 0..new_w.len() {
                let g = grad[i] + self.weight_decay * new_w[i];
                vel[i] = self.momentum * vel[i] + local_lr * g;
                new_w[i] -= vel[i];
            }
            p.set_data(new_w);
        }
    }
}
