use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GradBundle, ModelParams};

use super::config::{OptimizerKind, TrainConfig};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam or SGD state. Adam moments are allocated lazily on the first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: Option<f64>,
    pub step: u64,
    pub first_moment: Option<ModelParams>,
    pub second_moment: Option<ModelParams>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            grad_clip: None,
            step: 0,
            first_moment: None,
            second_moment: None,
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            grad_clip: cfg.grad_clip,
            ..Self::new(cfg.optimizer, cfg.learning_rate)
        }
    }

    /// Applies one update. Rejects non-finite gradients before touching state.
    pub fn step(&mut self, params: &mut ModelParams, mut grads: GradBundle) -> Result<StepInfo> {
        for (name, block) in grads.blocks() {
            if block.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { block: name.to_string() });
            }
        }
        if params.param_count() != grads.param_count() || params.dims() != grads.dims() {
            return Err(Error::Contract("gradient layout does not match parameters".into()));
        }
        let grad_norm = grads.global_norm();
        let clipped = match self.grad_clip {
            Some(clip) if grad_norm > clip => {
                let s = clip / grad_norm;
                for (_, block) in grads.blocks_mut() {
                    block.iter_mut().for_each(|g| *g *= s);
                }
                true
            }
            _ => false,
        };
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => params.add_scaled(&grads, -self.learning_rate)?,
            OptimizerKind::Adam => self.adam_update(params, &grads),
        }
        if !params.is_finite() {
            return Err(Error::NonFinite { block: "parameters after update".into() });
        }
        Ok(StepInfo { grad_norm, clipped })
    }

    fn adam_update(&mut self, params: &mut ModelParams, grads: &GradBundle) {
        let m = self.first_moment.get_or_insert_with(|| params.zeros_like());
        let v = self.second_moment.get_or_insert_with(|| params.zeros_like());
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let blocks = params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(m.blocks_mut().into_iter().zip(v.blocks_mut()));
        for (((_, p), (_, g)), ((_, mb), (_, vb))) in blocks {
            for j in 0..p.len() {
                mb[j] = b1 * mb[j] + (1.0 - b1) * g[j];
                vb[j] = b2 * vb[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = mb[j] / c1;
                let v_hat = vb[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
