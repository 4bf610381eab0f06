//! First-order optimizers over a flat parameter vector. Weight decay is the
//! coupled L2 form: `wd * theta` is added to the gradient before the update.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    Sgd { lr: f64, weight_decay: f64 },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, dim: usize, lr: f64, weight_decay: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(dim, lr, weight_decay)),
            OptimizerKind::Sgd => Optimizer::Sgd { lr, weight_decay },
        }
    }

    /// Adds the decay term to `grad` in place.
    pub fn apply_weight_decay(&self, params: &[f64], grad: &mut [f64]) {
        let wd = match self {
            Optimizer::Adam(a) => a.weight_decay,
            Optimizer::Sgd { weight_decay, .. } => *weight_decay,
        };
        if wd != 0.0 {
            for (g, p) in grad.iter_mut().zip(params) {
                *g += wd * p;
            }
        }
    }

    /// One update with an already-decayed gradient.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Adam(a) => a.step(params, grad),
            Optimizer::Sgd { lr, .. } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}
