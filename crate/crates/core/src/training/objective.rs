//! The multi-task objective
//!
//! ```text
//! L = (1/N) Σ_i (l1_i + l2_i) + l3
//! l1_i = |y_gt(i) − y_all(i)|
//! l2_i = Σ_s ω_s^i |y_s'(i) − y_s(i)|,   ω_s^i = tanh(|y_s'(i) − y_all(i)|)
//! l3   = λ Σ_k w_k · loss_k(F*_first, F*_second)
//! ```
//!
//! with `y_s'` the generated unimodal labels and `loss_k` the shared or
//! private covariance loss of directive `k` over the batch. Alongside the
//! value, [`compute_losses`] returns the gradient of `L` at every model output.

use serde::{Deserialize, Serialize};

use crate::alignment::{directive_loss, AlignmentSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{ForwardTrace, Upstream};

use super::config::{OmegaReference, TrainConfig};

/// Model outputs of one batch, gathered from per-sample traces.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutputs {
    pub y_all: Vec<f64>,
    pub y_uni: Vec<[f64; 3]>,
    /// `N × d` per modality (`F_s*`).
    pub projected: [Matrix; 3],
}

impl BatchOutputs {
    pub fn from_traces(traces: &[ForwardTrace]) -> Result<Self> {
        let projected = [0, 1, 2].map(|s| {
            let rows: Vec<&[f64]> = traces.iter().map(|t| t.fusion.projected[s].as_slice()).collect();
            Matrix::from_rows(&rows)
        });
        let [t, a, v] = projected;
        Ok(Self {
            y_all: traces.iter().map(ForwardTrace::y_all).collect(),
            y_uni: traces.iter().map(ForwardTrace::y_uni).collect(),
            projected: [t?, a?, v?],
        })
    }

    pub fn len(&self) -> usize {
        self.y_all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_all.is_empty()
    }
}

/// Objective knobs taken from [`TrainConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSettings {
    pub alignment_weight: f64,
    pub directive_weights: Vec<f64>,
    pub private_cap: f64,
    pub omega_reference: OmegaReference,
    /// When false the unimodal terms are dropped entirely.
    pub unimodal: bool,
}

impl ObjectiveSettings {
    pub fn from_config(cfg: &TrainConfig, spec: &AlignmentSpec) -> Self {
        Self {
            alignment_weight: cfg.alignment_weight,
            directive_weights: (0..spec.len()).map(|k| cfg.directive_weight(k)).collect(),
            private_cap: cfg.private_cap,
            omega_reference: cfg.omega_reference,
            unimodal: cfg.ulgm_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Batch mean of `l1_i`.
    pub l1: f64,
    /// Batch mean of `l2_i`.
    pub l2: f64,
    /// Weighted alignment term, already scaled by the alignment weight.
    pub l3: f64,
    pub total: f64,
    pub per_sample_l1: Vec<f64>,
    pub per_sample_l2: Vec<f64>,
    /// `ω_s^i` for `[T, A, V]`.
    pub weights: Vec<[f64; 3]>,
    /// Unweighted loss of each directive, in spec order.
    pub directive_values: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss breakdown and per-sample output gradients of the objective.
pub fn compute_losses(
    out: &BatchOutputs,
    y_gt: &[f64],
    unimodal_labels: &[[f64; 3]],
    spec: &AlignmentSpec,
    settings: &ObjectiveSettings,
) -> Result<(LossBreakdown, Vec<Upstream>)> {
    let n = out.len();
    if n == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    if y_gt.len() != n || unimodal_labels.len() != n || out.y_uni.len() != n {
        return Err(Error::Dimension {
            op: "compute_losses",
            left: (n, 1),
            right: (y_gt.len(), unimodal_labels.len()),
        });
    }
    let inv_n = 1.0 / n as f64;
    let d = out.projected[0].cols();
    let mut upstream: Vec<Upstream> = (0..n)
        .map(|_| Upstream {
            y_all: 0.0,
            y_uni: [0.0; 3],
            projected: [vec![0.0; d], vec![0.0; d], vec![0.0; d]],
        })
        .collect();
    let mut per_sample_l1 = Vec::with_capacity(n);
    let mut per_sample_l2 = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);

    for i in 0..n {
        let y_all = out.y_all[i];
        let l1 = (y_gt[i] - y_all).abs();
        upstream[i].y_all += inv_n * sign(y_all - y_gt[i]);

        let mut l2 = 0.0;
        let mut w = [0.0; 3];
        if settings.unimodal {
            for s in 0..3 {
                let target = unimodal_labels[i][s];
                let gap = (target - out.y_uni[i][s]).abs();
                let reference = match settings.omega_reference {
                    OmegaReference::Prediction => y_all,
                    OmegaReference::GroundTruth => y_gt[i],
                };
                let omega = (target - reference).abs().tanh();
                w[s] = omega;
                l2 += omega * gap;
                upstream[i].y_uni[s] += inv_n * omega * sign(out.y_uni[i][s] - target);
                if settings.omega_reference == OmegaReference::Prediction {
                    // dω/dy_all = (1 − ω²)·sign(y_all − y_s')
                    upstream[i].y_all += inv_n * gap * (1.0 - omega * omega) * sign(y_all - target);
                }
            }
        }
        per_sample_l1.push(l1);
        per_sample_l2.push(l2);
        weights.push(w);
    }

    let mut l3 = 0.0;
    let mut directive_values = Vec::with_capacity(spec.len());
    for (k, directive) in spec.directives().iter().enumerate() {
        let (first, second) = directive.pair;
        let dl = directive_loss(
            directive.kind,
            &out.projected[first.index()],
            &out.projected[second.index()],
            settings.private_cap,
        )?;
        let scale = settings.alignment_weight * settings.directive_weights.get(k).copied().unwrap_or(1.0);
        directive_values.push(dl.value);
        l3 += scale * dl.value;
        if scale != 0.0 {
            for (i, up) in upstream.iter_mut().enumerate() {
                let a = &mut up.projected[first.index()];
                a.iter_mut().zip(dl.grad_first.row(i)).for_each(|(u, g)| *u += scale * g);
                let b = &mut up.projected[second.index()];
                b.iter_mut().zip(dl.grad_second.row(i)).for_each(|(u, g)| *u += scale * g);
            }
        }
    }

    let sum: f64 = per_sample_l1.iter().zip(&per_sample_l2).map(|(a, b)| a + b).sum();
    let l1 = per_sample_l1.iter().sum::<f64>() * inv_n;
    let l2 = per_sample_l2.iter().sum::<f64>() * inv_n;
    let breakdown = LossBreakdown {
        l1,
        l2,
        l3,
        total: sum * inv_n + l3,
        per_sample_l1,
        per_sample_l2,
        weights,
        directive_values,
    };
    Ok((breakdown, upstream))
}
