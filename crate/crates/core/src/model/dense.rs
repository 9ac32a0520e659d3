use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Affine layer `y = Wᵀx + b` with `W` stored as `inputs × outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Matrix::zeros(inputs, outputs),
            b: vec![0.0; outputs],
        }
    }

    pub fn init(rng: &mut impl Rng, inputs: usize, outputs: usize) -> Self {
        let r = 1.0 / (inputs.max(1) as f64).sqrt();
        Self {
            w: Matrix::from_fn(inputs, outputs, |_, _| rng.random_range(-r..r)),
            b: (0..outputs).map(|_| rng.random_range(-r..r)).collect(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.rows()
    }

    pub fn outputs(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.w.t_matvec(x)?;
        y.iter_mut().zip(&self.b).for_each(|(y, b)| *y += b);
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns `∂/∂x`.
    pub fn backward(&self, x: &[f64], d_out: &[f64], grads: &mut Dense) -> Result<Vec<f64>> {
        if x.len() != self.inputs() || d_out.len() != self.outputs() || grads.w.shape() != self.w.shape() {
            return Err(Error::Dimension {
                op: "Dense::backward",
                left: self.w.shape(),
                right: (x.len(), d_out.len()),
            });
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (g, &d) in grads.w.row_mut(i).iter_mut().zip(d_out) {
                *g += xi * d;
            }
        }
        grads.b.iter_mut().zip(d_out).for_each(|(g, d)| *g += d);
        self.w.matvec(d_out)
    }
}

pub(crate) fn relu(pre: &[f64]) -> Vec<f64> {
    pre.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through ReLU; units with non-positive pre-activation pass nothing.
pub(crate) fn relu_backward(pre: &[f64], d_out: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(d_out)
        .map(|(&p, &d)| if p > 0.0 { d } else { 0.0 })
        .collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
