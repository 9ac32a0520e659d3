use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{shared_loss, AlignmentSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{covariance, Matrix};
use crate::metrics::{evaluate, MetricsReport};
use crate::modality::ModalityId;
use crate::model::{ForwardTrace, ModelParams};
use crate::ulgm::{ClassCenters, FeatureSnapshot, LabelStore};

use super::config::TrainConfig;
use super::objective::{compute_losses, BatchOutputs, ObjectiveSettings};
use super::optimizer::Optimizer;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Magnitude a generated label must move from the ground truth to count as moved.
pub const LABEL_MOVE_THRESHOLD: f64 = 0.05;

/// Sample-weighted means of the loss terms over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    pub steps: usize,
    pub clipped_steps: usize,
    pub labels_regenerated: bool,
    /// Fraction of (sample, modality) labels more than 0.05 from the ground truth.
    pub labels_moved: f64,
    /// Fraction of samples with any label more than 0.05 from the ground truth.
    pub samples_moved: f64,
}

/// Predictions and representations of a dataset under fixed parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<f64>,
    pub metrics: MetricsReport,
    /// `n × d` projected features per modality.
    pub projected: [Matrix; 3],
}

impl Evaluation {
    /// Shared covariance distance between two modalities over the whole set.
    pub fn theta_share(&self, a: ModalityId, b: ModalityId) -> Result<f64> {
        let c_a = covariance(&self.projected[a.index()])?;
        let c_b = covariance(&self.projected[b.index()])?;
        shared_loss(&c_a, &c_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Completed epochs.
    pub epoch: usize,
    pub config: TrainConfig,
    pub params: ModelParams,
    pub optimizer: Optimizer,
    pub labels: LabelStore,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    spec: AlignmentSpec,
    settings: ObjectiveSettings,
    pub params: ModelParams,
    pub optimizer: Optimizer,
    pub labels: LabelStore,
    /// Centers from the most recent epoch end, when label generation is on.
    pub centers: Option<ClassCenters>,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, train: &Dataset) -> Result<Self> {
        let spec = config.validate()?;
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let dims = config.dims.model_dims(train.step_dims()?);
        let params = ModelParams::init(&dims, config.seed)?;
        let labels = LabelStore::new(train.labels(), config.label_range)?;
        Ok(Self {
            settings: ObjectiveSettings::from_config(&config, &spec),
            optimizer: Optimizer::from_config(&config),
            spec,
            params,
            labels,
            centers: None,
            epoch: 0,
            config,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {}", ckpt.format_version)));
        }
        let spec = ckpt.config.validate()?;
        Ok(Self {
            settings: ObjectiveSettings::from_config(&ckpt.config, &spec),
            spec,
            params: ckpt.params,
            optimizer: ckpt.optimizer,
            labels: ckpt.labels,
            centers: None,
            epoch: ckpt.epoch,
            config: ckpt.config,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            epoch: self.epoch,
            config: self.config.clone(),
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn spec(&self) -> &AlignmentSpec {
        &self.spec
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Seeded permutation of the training indices for a 1-based epoch.
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Splits an order into batches; a trailing singleton joins the previous batch.
    pub fn batches(&self, order: &[usize]) -> Vec<Vec<usize>> {
        let mut batches: Vec<Vec<usize>> = order.chunks(self.config.batch_size).map(<[usize]>::to_vec).collect();
        if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            let last = batches.pop().expect("non-empty");
            batches.last_mut().expect("non-empty").extend(last);
        }
        batches
    }

    pub fn train_epoch(&mut self, train: &Dataset) -> Result<EpochSummary> {
        let n = train.len();
        if n != self.labels.len() {
            return Err(Error::Data(format!(
                "training set has {n} samples, label store {}",
                self.labels.len()
            )));
        }
        let epoch = self.epoch + 1;
        let order = self.epoch_order(n, epoch);
        let dims = self.params.dims();
        let mut fused = Matrix::zeros(n, dims.d_all);
        let mut projected = [0; 3].map(|_| Matrix::zeros(n, dims.d));
        let (mut l1, mut l2, mut l3, mut total) = (0.0, 0.0, 0.0, 0.0);
        let mut steps = 0;
        let mut clipped_steps = 0;

        for batch in self.batches(&order) {
            let traces = batch
                .iter()
                .map(|&i| self.params.forward(train.samples[i].inputs()))
                .collect::<Result<Vec<ForwardTrace>>>()?;
            let outputs = BatchOutputs::from_traces(&traces)?;
            let y_gt: Vec<f64> = batch.iter().map(|&i| self.labels.ground_truth[i]).collect();
            let uni: Vec<[f64; 3]> = batch.iter().map(|&i| self.labels.labels[i]).collect();
            let (loss, upstream) = compute_losses(&outputs, &y_gt, &uni, &self.spec, &self.settings)?;

            let mut grads = self.params.zeros_like();
            for (trace, up) in traces.iter().zip(&upstream) {
                self.params.backward(trace, up, &mut grads)?;
            }
            let info = self.optimizer.step(&mut self.params, grads)?;

            for (trace, &i) in traces.iter().zip(&batch) {
                fused.row_mut(i).copy_from_slice(trace.fused());
                for m in ModalityId::ALL {
                    projected[m.index()].row_mut(i).copy_from_slice(trace.projected(m));
                }
            }
            let w = batch.len() as f64;
            l1 += w * loss.l1;
            l2 += w * loss.l2;
            l3 += w * loss.l3;
            total += w * loss.total;
            steps += 1;
            clipped_steps += usize::from(info.clipped);
        }

        let mut labels_regenerated = false;
        if self.config.ulgm_enabled {
            let snapshot = FeatureSnapshot { fused, projected };
            self.centers = Some(if epoch >= 2 {
                labels_regenerated = true;
                self.labels.regenerate(&snapshot, self.config.beta())?
            } else {
                ClassCenters::compute(&snapshot, &self.labels)?
            });
        }
        self.epoch = epoch;
        let inv = 1.0 / n as f64;
        Ok(EpochSummary {
            epoch,
            l1: l1 * inv,
            l2: l2 * inv,
            l3: l3 * inv,
            total: total * inv,
            steps,
            clipped_steps,
            labels_regenerated,
            labels_moved: self.labels.fraction_moved(LABEL_MOVE_THRESHOLD),
            samples_moved: self.labels.fraction_samples_moved(LABEL_MOVE_THRESHOLD),
        })
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<Evaluation> {
        evaluate_params(&self.params, data)
    }
}

/// Forward pass over `data` without any parameter change.
pub fn evaluate_params(params: &ModelParams, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let dims = params.dims();
    let n = data.len();
    let mut predictions = Vec::with_capacity(n);
    let mut projected = [0; 3].map(|_| Matrix::zeros(n, dims.d));
    for (i, sample) in data.samples.iter().enumerate() {
        let trace = params.forward(sample.inputs())?;
        predictions.push(trace.y_all());
        for m in ModalityId::ALL {
            projected[m.index()].row_mut(i).copy_from_slice(trace.projected(m));
        }
    }
    let metrics = evaluate(&predictions, &data.labels())?;
    Ok(Evaluation {
        predictions,
        metrics,
        projected,
    })
}
