//! Multimodal regression with covariance-based modality alignment and
//! self-supervised unimodal label generation.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`]: dense matrices, batch covariance, Jacobi eigensolver.
//! * [`alignment`]: covariance-matching loss, its gradient, directive parsing
//!   and the closed-form optimal alignment map.
//! * [`model`]: toy encoders, fusion and heads with hand-written backward passes.
//! * [`ulgm`]: unimodal label generation from class-center distances.
//! * [`training`]: multi-task objective, optimizers, epoch loop, gradient checks.
//! * [`data`]: synthetic planted-latent datasets and JSONL ingestion.
//! * [`metrics`]: MAE, Pearson correlation, binary accuracy and weighted F1.

pub mod alignment;
pub mod data;
mod error;
pub mod linalg;
pub mod metrics;
pub mod modality;
pub mod model;
pub mod training;
pub mod ulgm;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use modality::ModalityId;
