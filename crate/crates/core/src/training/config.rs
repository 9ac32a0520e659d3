use serde::{Deserialize, Serialize};

use crate::alignment::{parse_alignment_spec, AlignmentSpec, DEFAULT_PRIVATE_CAP};
use crate::error::{Error, Result};
use crate::model::ModelDims;
use crate::ulgm::LabelRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// What the unimodal weight `tanh(|y_s' − ·|)` measures the generated label against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaReference {
    /// The multimodal prediction (differentiated through).
    Prediction,
    /// The multimodal ground-truth label (a constant).
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub d_t: usize,
    pub d_a: usize,
    pub d_v: usize,
    pub d_all: usize,
    pub d: usize,
}

impl Default for DimsConfig {
    fn default() -> Self {
        Self {
            d_t: 16,
            d_a: 16,
            d_v: 16,
            d_all: 32,
            d: 32,
        }
    }
}

impl DimsConfig {
    pub fn model_dims(&self, step_dims: [usize; 3]) -> ModelDims {
        ModelDims {
            step_dims,
            d_t: self.d_t,
            d_a: self.d_a,
            d_v: self.d_v,
            d_all: self.d_all,
            d: self.d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Directive list such as `"V-A"` or `"T-V/T+A"`; empty disables alignment.
    pub alignment_spec: String,
    /// Multiplier on the summed alignment terms.
    pub alignment_weight: f64,
    /// Per-directive weights; empty means 1.0 for every directive.
    pub directive_weights: Vec<f64>,
    /// Saturation level of the private (`+`) loss.
    pub private_cap: f64,
    /// Enables the unimodal subtasks and label generation.
    pub ulgm_enabled: bool,
    /// Label shift scale; defaults to half the label range.
    pub ulgm_beta: Option<f64>,
    pub label_range: LabelRange,
    pub seed: u64,
    pub dims: DimsConfig,
    pub omega_reference: OmegaReference,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            alignment_spec: String::new(),
            alignment_weight: 1.0,
            directive_weights: Vec::new(),
            private_cap: DEFAULT_PRIVATE_CAP,
            ulgm_enabled: true,
            ulgm_beta: None,
            label_range: LabelRange::default(),
            seed: 0,
            dims: DimsConfig::default(),
            omega_reference: OmegaReference::Prediction,
            grad_clip: Some(5.0),
        }
    }
}

impl TrainConfig {
    /// Checks ranges and parses the alignment spec.
    pub fn validate(&self) -> Result<AlignmentSpec> {
        let spec = parse_alignment_spec(&self.alignment_spec)?;
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        positive("learning_rate", self.learning_rate)?;
        positive("private_cap", self.private_cap)?;
        if !(self.alignment_weight >= 0.0 && self.alignment_weight.is_finite()) {
            return Err(Error::Config("alignment_weight must be non-negative".into()));
        }
        if !self.directive_weights.is_empty() && self.directive_weights.len() != spec.len() {
            return Err(Error::Config(format!(
                "{} directive weights for {} directives",
                self.directive_weights.len(),
                spec.len()
            )));
        }
        if let Some(beta) = self.ulgm_beta {
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(Error::Config("ulgm_beta must be non-negative".into()));
            }
        }
        if let Some(clip) = self.grad_clip {
            positive("grad_clip", clip)?;
        }
        LabelRange::new(self.label_range.min, self.label_range.max)?;
        let d = self.dims;
        if [d.d_t, d.d_a, d.d_v, d.d_all, d.d].contains(&0) {
            return Err(Error::Config("all dims must be positive".into()));
        }
        Ok(spec)
    }

    pub fn beta(&self) -> f64 {
        self.ulgm_beta.unwrap_or_else(|| self.label_range.default_beta())
    }

    pub fn directive_weight(&self, k: usize) -> f64 {
        self.directive_weights.get(k).copied().unwrap_or(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = TrainConfig::default();
        assert!(cfg.validate().unwrap().is_empty());
        assert_eq!(cfg.beta(), 3.0);
    }

    #[test]
    fn json_keys_are_strict() {
        let ok: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "alignment_spec": "V-A"}"#).unwrap();
        assert_eq!(ok.epochs, 3);
        assert_eq!(ok.validate().unwrap().len(), 1);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
        let round: TrainConfig = serde_json::from_str(&serde_json::to_string(&ok).unwrap()).unwrap();
        assert_eq!(round, ok);
    }

    #[test]
    fn bad_values_rejected() {
        let bad_spec = TrainConfig {
            alignment_spec: "Q-A".into(),
            ..TrainConfig::default()
        };
        assert!(matches!(bad_spec.validate(), Err(Error::Parse { position: 0, .. })));
        let weights = TrainConfig {
            alignment_spec: "V-A".into(),
            directive_weights: vec![1.0, 2.0],
            ..TrainConfig::default()
        };
        assert!(weights.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
    }
}
