//! Text encoder: `tanh(Wᵀ·mean_l(x_l) + b)`.
//!
//! Stands in for a pretrained sentence encoder; anything mapping a
//! `steps × input` sequence to a fixed-length vector fits the same slot.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEncoder {
    /// `input × output`
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TextCache {
    steps: usize,
    mean: Vec<f64>,
    out: Vec<f64>,
}

impl TextEncoder {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Matrix::zeros(input, output),
            b: vec![0.0; output],
        }
    }

    pub fn init(rng: &mut impl Rng, input: usize, output: usize) -> Self {
        let r = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            w: Matrix::from_fn(input, output, |_, _| rng.random_range(-r..r)),
            b: (0..output).map(|_| rng.random_range(-r..r)).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, seq: &Matrix) -> Result<(Vec<f64>, TextCache)> {
        if seq.cols() != self.input_dim() || seq.rows() == 0 {
            return Err(Error::Dimension {
                op: "text_encode",
                left: seq.shape(),
                right: self.w.shape(),
            });
        }
        let mean = seq.column_means();
        let out: Vec<f64> = self
            .w
            .t_matvec(&mean)?
            .iter()
            .zip(&self.b)
            .map(|(u, b)| (u + b).tanh())
            .collect();
        Ok((
            out.clone(),
            TextCache {
                steps: seq.rows(),
                mean,
                out,
            },
        ))
    }

    /// Accumulates into `grads`; returns the gradient w.r.t. the input sequence.
    pub fn backward(&self, cache: &TextCache, d_out: &[f64], grads: &mut TextEncoder) -> Result<Matrix> {
        if d_out.len() != self.output_dim() || grads.w.shape() != self.w.shape() || cache.mean.len() != self.input_dim() {
            return Err(Error::Dimension {
                op: "text_backward",
                left: self.w.shape(),
                right: (cache.mean.len(), d_out.len()),
            });
        }
        let du: Vec<f64> = d_out
            .iter()
            .zip(&cache.out)
            .map(|(d, y)| d * (1.0 - y * y))
            .collect();
        for (i, &m) in cache.mean.iter().enumerate() {
            for (g, &d) in grads.w.row_mut(i).iter_mut().zip(&du) {
                *g += m * d;
            }
        }
        grads.b.iter_mut().zip(&du).for_each(|(g, d)| *g += d);
        let per_step: Vec<f64> = self
            .w
            .matvec(&du)?
            .into_iter()
            .map(|v| v / cache.steps as f64)
            .collect();
        let mut d_input = Matrix::zeros(cache.steps, self.input_dim());
        for t in 0..cache.steps {
            d_input.row_mut(t).copy_from_slice(&per_step);
        }
        Ok(d_input)
    }
}
