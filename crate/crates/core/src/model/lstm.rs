//! Single-layer unidirectional LSTM encoder returning the last hidden state.
//!
//! Gates are laid out `[input, forget, candidate, output]`, each `hidden` wide:
//!
//! ```text
//! z_t = W_xᵀ x_t + W_hᵀ h_{t-1} + b
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::dense::sigmoid;

/// Forget-gate bias at initialization.
pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmEncoder {
    /// `input × 4·hidden`
    pub w_x: Matrix,
    /// `hidden × 4·hidden`
    pub w_h: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Matrix,
    steps: Vec<StepCache>,
}

impl LstmEncoder {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_x: Matrix::zeros(input, 4 * hidden),
            w_h: Matrix::zeros(hidden, 4 * hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform(−r, r) with `r = 1/√(input + hidden)`; forget bias set to 1.
    pub fn init(rng: &mut impl Rng, input: usize, hidden: usize) -> Self {
        let r = 1.0 / ((input + hidden).max(1) as f64).sqrt();
        let mut enc = Self {
            w_x: Matrix::from_fn(input, 4 * hidden, |_, _| rng.random_range(-r..r)),
            w_h: Matrix::from_fn(hidden, 4 * hidden, |_, _| rng.random_range(-r..r)),
            b: (0..4 * hidden).map(|_| rng.random_range(-r..r)).collect(),
        };
        enc.b[hidden..2 * hidden].fill(FORGET_BIAS_INIT);
        enc
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.rows()
    }

    pub fn param_count(&self) -> usize {
        self.w_x.as_slice().len() + self.w_h.as_slice().len() + self.b.len()
    }

    /// Runs the recurrence over the rows of `seq` (`steps × input`) from zero
    /// state and returns the final hidden vector.
    pub fn forward(&self, seq: &Matrix) -> Result<(Vec<f64>, LstmCache)> {
        let h = self.hidden_dim();
        if seq.cols() != self.input_dim() || seq.rows() == 0 {
            return Err(Error::Dimension {
                op: "lstm_encode",
                left: seq.shape(),
                right: self.w_x.shape(),
            });
        }
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut steps = Vec::with_capacity(seq.rows());
        for t in 0..seq.rows() {
            let mut z = self.w_x.t_matvec(seq.row(t))?;
            let zh = self.w_h.t_matvec(&h_prev)?;
            z.iter_mut()
                .zip(zh.iter().zip(&self.b))
                .for_each(|(z, (a, b))| *z += a + b);
            let i: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
            let o: Vec<f64> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
            let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
            steps.push(StepCache {
                h_prev: std::mem::replace(&mut h_prev, h_new),
                c_prev: std::mem::replace(&mut c_prev, c),
                i,
                f,
                g,
                o,
                tanh_c,
            });
        }
        Ok((
            h_prev,
            LstmCache {
                input: seq.clone(),
                steps,
            },
        ))
    }

    /// Backpropagation through time from `∂/∂h_T`. Accumulates into `grads`
    /// and returns the gradient w.r.t. the input sequence.
    pub fn backward(&self, cache: &LstmCache, d_out: &[f64], grads: &mut LstmEncoder) -> Result<Matrix> {
        let h = self.hidden_dim();
        if d_out.len() != h || grads.w_x.shape() != self.w_x.shape() || cache.input.cols() != self.input_dim() {
            return Err(Error::Dimension {
                op: "lstm_backward",
                left: self.w_h.shape(),
                right: (d_out.len(), cache.input.cols()),
            });
        }
        let mut d_input = Matrix::zeros(cache.input.rows(), cache.input.cols());
        let mut dh = d_out.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for (t, s) in cache.steps.iter().enumerate().rev() {
            for k in 0..h {
                let d_o = dh[k] * s.tanh_c[k];
                dc[k] += dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let d_i = dc[k] * s.g[k];
                let d_g = dc[k] * s.i[k];
                let d_f = dc[k] * s.c_prev[k];
                dz[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                dz[h + k] = d_f * s.f[k] * (1.0 - s.f[k]);
                dz[2 * h + k] = d_g * (1.0 - s.g[k] * s.g[k]);
                dz[3 * h + k] = d_o * s.o[k] * (1.0 - s.o[k]);
                dc[k] *= s.f[k];
            }
            let x = cache.input.row(t);
            for (r, &xr) in x.iter().enumerate() {
                for (g, &d) in grads.w_x.row_mut(r).iter_mut().zip(&dz) {
                    *g += xr * d;
                }
            }
            for (r, &hr) in s.h_prev.iter().enumerate() {
                if hr == 0.0 {
                    continue;
                }
                for (g, &d) in grads.w_h.row_mut(r).iter_mut().zip(&dz) {
                    *g += hr * d;
                }
            }
            grads.b.iter_mut().zip(&dz).for_each(|(g, d)| *g += d);
            d_input
                .row_mut(t)
                .copy_from_slice(&self.w_x.matvec(&dz)?);
            dh = self.w_h.matvec(&dz)?;
        }
        Ok(d_input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut impl Rng, steps: usize, input: usize) -> Matrix {
        Matrix::from_fn(steps, input, |_, _| rng.random_range(-1.0..1.0))
    }

    fn blocks_mut(enc: &mut LstmEncoder) -> [&mut [f64]; 3] {
        [enc.w_x.as_mut_slice(), enc.w_h.as_mut_slice(), &mut enc.b]
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let enc = LstmEncoder::zeros(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (h, _) = enc.forward(&random_seq(&mut rng, 4, 2)).unwrap();
        assert_eq!(h, vec![0.0; 3]);
    }

    #[test]
    fn single_step_matches_hand_rolled_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = LstmEncoder::init(&mut rng, 2, 3);
        let seq = random_seq(&mut rng, 1, 2);
        let (h, _) = enc.forward(&seq).unwrap();
        // zero initial state: the recurrent term vanishes and c = i·g
        let x = seq.row(0);
        for k in 0..3 {
            let pre = |gate: usize| {
                let col = gate * 3 + k;
                enc.b[col] + x[0] * enc.w_x[(0, col)] + x[1] * enc.w_x[(1, col)]
            };
            let s = |v: f64| 1.0 / (1.0 + (-v).exp());
            let c = s(pre(0)) * pre(2).tanh();
            let expected = s(pre(3)) * c.tanh();
            assert!((h[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_wrong_input_width() {
        let enc = LstmEncoder::zeros(2, 3);
        assert!(enc.forward(&Matrix::zeros(4, 3)).is_err());
        assert!(enc.forward(&Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let enc = LstmEncoder::init(&mut rng, 2, 3);
            let seq = random_seq(&mut rng, 3, 2);
            let upstream: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let objective = |e: &LstmEncoder, s: &Matrix| -> f64 {
                let (h, _) = e.forward(s).unwrap();
                h.iter().zip(&upstream).map(|(a, b)| a * b).sum()
            };

            let (_, cache) = enc.forward(&seq).unwrap();
            let mut grads = LstmEncoder::zeros(2, 3);
            let d_input = enc.backward(&cache, &upstream, &mut grads).unwrap();

            let step = 1e-5;
            let mut probe = enc.clone();
            let analytic = grads.clone();
            let analytic_blocks = [analytic.w_x.as_slice(), analytic.w_h.as_slice(), &analytic.b[..]];
            for (bi, block) in analytic_blocks.iter().enumerate() {
                for j in 0..block.len() {
                    let orig = blocks_mut(&mut probe)[bi][j];
                    blocks_mut(&mut probe)[bi][j] = orig + step;
                    let plus = objective(&probe, &seq);
                    blocks_mut(&mut probe)[bi][j] = orig - step;
                    let minus = objective(&probe, &seq);
                    blocks_mut(&mut probe)[bi][j] = orig;
                    let numeric = (plus - minus) / (2.0 * step);
                    assert!(rel(block[j], numeric) < 1e-5, "seed {seed} block {bi}[{j}]");
                }
            }
            for t in 0..3 {
                for j in 0..2 {
                    let mut s = seq.clone();
                    s[(t, j)] += step;
                    let plus = objective(&enc, &s);
                    s[(t, j)] -= 2.0 * step;
                    let minus = objective(&enc, &s);
                    let numeric = (plus - minus) / (2.0 * step);
                    assert!(rel(d_input[(t, j)], numeric) < 1e-5);
                }
            }
        }
    }
}
