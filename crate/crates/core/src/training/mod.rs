//! Multi-task objective, optimizers, the epoch loop and gradient checks.

mod config;
mod gradcheck;
mod objective;
mod optimizer;
mod trainer;

pub use config::{DimsConfig, OmegaReference, OptimizerKind, TrainConfig};
pub use gradcheck::{gradcheck, max_relative_error, CompositeProblem, ALIGNMENT_TOL, COMPOSITE_TOL, FD_STEP};
pub use objective::{compute_losses, BatchOutputs, LossBreakdown, ObjectiveSettings};
pub use optimizer::{Optimizer, StepInfo, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{
    evaluate_params, Checkpoint, EpochSummary, Evaluation, Trainer, CHECKPOINT_FORMAT_VERSION, LABEL_MOVE_THRESHOLD,
};
