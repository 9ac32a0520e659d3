//! Encoders, late fusion and prediction heads with hand-written adjoints.
//!
//! Per sample the forward pass is
//!
//! ```text
//! F_t = text(x_t)   F_a = lstm_a(x_a)   F_v = lstm_v(x_v)
//! F_all* = ReLU(W_fᵀ [F_t; F_a; F_v] + b_f)      y_all = w_allᵀ F_all* + b_all
//! F_s*   = ReLU(W_sᵀ F_s + b_s)                  y_s   = w_sᵀ F_s* + b_s'
//! ```
//!
//! and [`ModelParams::backward`] accumulates gradients from the multimodal
//! head, the three unimodal heads and any gradient arriving directly at the
//! projected features `F_s*` (the alignment loss).

mod dense;
mod lstm;
mod text;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::modality::ModalityId;

pub use dense::Dense;
pub use lstm::{LstmCache, LstmEncoder, FORGET_BIAS_INIT};
pub use text::{TextCache, TextEncoder};

use dense::{relu, relu_backward};

/// Layer widths. `step_dims` are the per-step input widths of `[T, A, V]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub step_dims: [usize; 3],
    pub d_t: usize,
    pub d_a: usize,
    pub d_v: usize,
    pub d_all: usize,
    pub d: usize,
}

impl ModelDims {
    pub fn encoder_dims(&self) -> [usize; 3] {
        [self.d_t, self.d_a, self.d_v]
    }

    /// Closed-form number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let [in_t, in_a, in_v] = self.step_dims;
        let lstm = |input: usize, h: usize| 4 * h * (input + h + 1);
        let concat = self.d_t + self.d_a + self.d_v;
        (in_t + 1) * self.d_t
            + lstm(in_a, self.d_a)
            + lstm(in_v, self.d_v)
            + (concat + 1) * self.d_all
            + self.d_all
            + 1
            + (concat + 3) * self.d
            + 3 * (self.d + 1)
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.step_dims[0],
            self.step_dims[1],
            self.step_dims[2],
            self.d_t,
            self.d_a,
            self.d_v,
            self.d_all,
            self.d,
        ];
        if all.contains(&0) {
            return Err(Error::Config(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Every trainable weight. The same shape doubles as a gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub text: TextEncoder,
    pub audio: LstmEncoder,
    pub vision: LstmEncoder,
    pub fusion: Dense,
    pub head_all: Dense,
    /// Per-modality projections to the shared width `d`, `[T, A, V]`.
    pub projections: [Dense; 3],
    pub heads: [Dense; 3],
}

/// Gradients share the parameter layout.
pub type GradBundle = ModelParams;

/// Cached forward state of the fusion and head layers for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrace {
    /// `F_s` for `[T, A, V]`.
    pub features: [Vec<f64>; 3],
    pub concat: Vec<f64>,
    pub fused_pre: Vec<f64>,
    /// `F_all*`
    pub fused: Vec<f64>,
    pub y_all: f64,
    pub projected_pre: [Vec<f64>; 3],
    /// `F_s*`
    pub projected: [Vec<f64>; 3],
    pub y_uni: [f64; 3],
}

/// Full forward trace for one sample, encoders included.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub text: TextCache,
    pub audio: LstmCache,
    pub vision: LstmCache,
    pub fusion: FusionTrace,
}

impl ForwardTrace {
    pub fn y_all(&self) -> f64 {
        self.fusion.y_all
    }

    pub fn y_uni(&self) -> [f64; 3] {
        self.fusion.y_uni
    }

    pub fn projected(&self, m: ModalityId) -> &[f64] {
        &self.fusion.projected[m.index()]
    }

    pub fn fused(&self) -> &[f64] {
        &self.fusion.fused
    }
}

/// Loss gradients arriving at the model outputs of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Upstream {
    pub y_all: f64,
    pub y_uni: [f64; 3],
    /// Gradient at `F_s*`; an empty vector means zero.
    pub projected: [Vec<f64>; 3],
}

impl Upstream {
    pub fn zero() -> Self {
        Self {
            y_all: 0.0,
            y_uni: [0.0; 3],
            projected: [Vec::new(), Vec::new(), Vec::new()],
        }
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

impl ModelParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        let [in_t, in_a, in_v] = dims.step_dims;
        let enc = dims.encoder_dims();
        Self {
            text: TextEncoder::zeros(in_t, dims.d_t),
            audio: LstmEncoder::zeros(in_a, dims.d_a),
            vision: LstmEncoder::zeros(in_v, dims.d_v),
            fusion: Dense::zeros(dims.d_t + dims.d_a + dims.d_v, dims.d_all),
            head_all: Dense::zeros(dims.d_all, 1),
            projections: enc.map(|e| Dense::zeros(e, dims.d)),
            heads: [0; 3].map(|_| Dense::zeros(dims.d, 1)),
        }
    }

    /// Seeded uniform(−1/√fan_in, 1/√fan_in) initialization.
    pub fn init(dims: &ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [in_t, in_a, in_v] = dims.step_dims;
        let text = TextEncoder::init(&mut rng, in_t, dims.d_t);
        let audio = LstmEncoder::init(&mut rng, in_a, dims.d_a);
        let vision = LstmEncoder::init(&mut rng, in_v, dims.d_v);
        let fusion = Dense::init(&mut rng, dims.d_t + dims.d_a + dims.d_v, dims.d_all);
        let head_all = Dense::init(&mut rng, dims.d_all, 1);
        let projections = dims.encoder_dims().map(|e| Dense::init(&mut rng, e, dims.d));
        let heads = [0; 3].map(|_| Dense::init(&mut rng, dims.d, 1));
        Ok(Self {
            text,
            audio,
            vision,
            fusion,
            head_all,
            projections,
            heads,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            step_dims: [self.text.input_dim(), self.audio.input_dim(), self.vision.input_dim()],
            d_t: self.text.output_dim(),
            d_a: self.audio.hidden_dim(),
            d_v: self.vision.hidden_dim(),
            d_all: self.fusion.outputs(),
            d: self.projections[0].outputs(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.dims())
    }

    /// Named flat views of every parameter block, in a fixed order.
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let [pt, pa, pv] = &self.projections;
        let [ht, ha, hv] = &self.heads;
        vec![
            ("text.w", self.text.w.as_slice()),
            ("text.b", &self.text.b),
            ("audio.w_x", self.audio.w_x.as_slice()),
            ("audio.w_h", self.audio.w_h.as_slice()),
            ("audio.b", &self.audio.b),
            ("vision.w_x", self.vision.w_x.as_slice()),
            ("vision.w_h", self.vision.w_h.as_slice()),
            ("vision.b", &self.vision.b),
            ("fusion.w", self.fusion.w.as_slice()),
            ("fusion.b", &self.fusion.b),
            ("head_all.w", self.head_all.w.as_slice()),
            ("head_all.b", &self.head_all.b),
            ("projection_t.w", pt.w.as_slice()),
            ("projection_t.b", &pt.b),
            ("projection_a.w", pa.w.as_slice()),
            ("projection_a.b", &pa.b),
            ("projection_v.w", pv.w.as_slice()),
            ("projection_v.b", &pv.b),
            ("head_t.w", ht.w.as_slice()),
            ("head_t.b", &ht.b),
            ("head_a.w", ha.w.as_slice()),
            ("head_a.b", &ha.b),
            ("head_v.w", hv.w.as_slice()),
            ("head_v.b", &hv.b),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let [pt, pa, pv] = &mut self.projections;
        let [ht, ha, hv] = &mut self.heads;
        vec![
            ("text.w", self.text.w.as_mut_slice()),
            ("text.b", &mut self.text.b),
            ("audio.w_x", self.audio.w_x.as_mut_slice()),
            ("audio.w_h", self.audio.w_h.as_mut_slice()),
            ("audio.b", &mut self.audio.b),
            ("vision.w_x", self.vision.w_x.as_mut_slice()),
            ("vision.w_h", self.vision.w_h.as_mut_slice()),
            ("vision.b", &mut self.vision.b),
            ("fusion.w", self.fusion.w.as_mut_slice()),
            ("fusion.b", &mut self.fusion.b),
            ("head_all.w", self.head_all.w.as_mut_slice()),
            ("head_all.b", &mut self.head_all.b),
            ("projection_t.w", pt.w.as_mut_slice()),
            ("projection_t.b", &mut pt.b),
            ("projection_a.w", pa.w.as_mut_slice()),
            ("projection_a.b", &mut pa.b),
            ("projection_v.w", pv.w.as_mut_slice()),
            ("projection_v.b", &mut pv.b),
            ("head_t.w", ht.w.as_mut_slice()),
            ("head_t.b", &mut ht.b),
            ("head_a.w", ha.w.as_mut_slice()),
            ("head_a.b", &mut ha.b),
            ("head_v.w", hv.w.as_mut_slice()),
            ("head_v.b", &mut hv.b),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    /// `self += scale · other`, block by block.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) -> Result<()> {
        let src = other.blocks();
        let mut dst = self.blocks_mut();
        if src.len() != dst.len() || src.iter().zip(&dst).any(|(s, d)| s.1.len() != d.1.len()) {
            return Err(Error::Contract("parameter layouts differ".into()));
        }
        for ((_, d), (_, s)) in dst.iter_mut().zip(&src) {
            d.iter_mut().zip(s.iter()).for_each(|(d, s)| *d += scale * s);
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|(_, b)| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Fusion, multimodal head, unimodal projections and heads.
    pub fn fuse_and_predict(&self, features: [Vec<f64>; 3]) -> Result<FusionTrace> {
        let concat: Vec<f64> = features.iter().flatten().copied().collect();
        let fused_pre = self.fusion.forward(&concat)?;
        let fused = relu(&fused_pre);
        let y_all = self.head_all.forward(&fused)?[0];
        let mut projected_pre: [Vec<f64>; 3] = Default::default();
        let mut projected: [Vec<f64>; 3] = Default::default();
        let mut y_uni = [0.0; 3];
        for s in 0..3 {
            projected_pre[s] = self.projections[s].forward(&features[s])?;
            projected[s] = relu(&projected_pre[s]);
            y_uni[s] = self.heads[s].forward(&projected[s])?[0];
        }
        Ok(FusionTrace {
            features,
            concat,
            fused_pre,
            fused,
            y_all,
            projected_pre,
            projected,
            y_uni,
        })
    }

    /// Adjoint of [`Self::fuse_and_predict`]; returns `∂/∂F_s` for `[T, A, V]`.
    pub fn fusion_backward(&self, trace: &FusionTrace, upstream: &Upstream, grads: &mut GradBundle) -> Result<[Vec<f64>; 3]> {
        let d = self.projections[0].outputs();
        if trace.fused.len() != self.fusion.outputs() || trace.concat.len() != self.fusion.inputs() {
            return Err(Error::Contract("forward trace does not match parameters".into()));
        }
        let d_fused = self.head_all.backward(&trace.fused, &[upstream.y_all], &mut grads.head_all)?;
        let d_fused_pre = relu_backward(&trace.fused_pre, &d_fused);
        let d_concat = self.fusion.backward(&trace.concat, &d_fused_pre, &mut grads.fusion)?;

        let mut d_features: [Vec<f64>; 3] = Default::default();
        let mut offset = 0;
        for s in 0..3 {
            let width = trace.features[s].len();
            let mut d_proj = self.heads[s].backward(&trace.projected[s], &[upstream.y_uni[s]], &mut grads.heads[s])?;
            let extra = &upstream.projected[s];
            if !extra.is_empty() {
                if extra.len() != d {
                    return Err(Error::Dimension {
                        op: "fusion_backward",
                        left: (d, 1),
                        right: (extra.len(), 1),
                    });
                }
                add_into(&mut d_proj, extra);
            }
            let d_proj_pre = relu_backward(&trace.projected_pre[s], &d_proj);
            let mut d_feat = self.projections[s].backward(&trace.features[s], &d_proj_pre, &mut grads.projections[s])?;
            add_into(&mut d_feat, &d_concat[offset..offset + width]);
            offset += width;
            d_features[s] = d_feat;
        }
        Ok(d_features)
    }

    /// Encodes all three modalities and runs fusion and heads.
    pub fn forward(&self, inputs: [&Matrix; 3]) -> Result<ForwardTrace> {
        let (f_t, text) = self.text.forward(inputs[0])?;
        let (f_a, audio) = self.audio.forward(inputs[1])?;
        let (f_v, vision) = self.vision.forward(inputs[2])?;
        let fusion = self.fuse_and_predict([f_t, f_a, f_v])?;
        Ok(ForwardTrace {
            text,
            audio,
            vision,
            fusion,
        })
    }

    /// Full adjoint for one sample, accumulated additively into `grads`.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Upstream, grads: &mut GradBundle) -> Result<()> {
        let [d_t, d_a, d_v] = self.fusion_backward(&trace.fusion, upstream, grads)?;
        self.text.backward(&trace.text, &d_t, &mut grads.text)?;
        self.audio.backward(&trace.audio, &d_a, &mut grads.audio)?;
        self.vision.backward(&trace.vision, &d_v, &mut grads.vision)?;
        Ok(())
    }
}
