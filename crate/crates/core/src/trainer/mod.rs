//! Small MLP feature extractor trained by SGD on synthetic Gaussian blobs.

mod data;
mod model;
mod stats;
mod train;

pub use data::{generate_blobs, BlobSpec, SyntheticDataset};
pub use model::{Layer, MlpModel, MODEL_MAGIC, MODEL_VERSION};
pub use stats::{angular_stats, AngularStats, ClassAngles};
pub use train::{
    accuracy, is_converged, predict, train, EpochRecord, TrainConfig, TrainRun, CONVERGENCE_WINDOW,
};

use thiserror::Error;

use crate::losses::LossError;
use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration `{field}`: {detail}")]
    Config { field: &'static str, detail: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged (non-finite loss or parameters) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Features of `model` on `inputs`; see [`MlpModel::extract_features`].
pub fn extract_features(
    model: &MlpModel,
    inputs: &crate::tensor::Matrix,
) -> Result<crate::tensor::Matrix, TrainError> {
    model.extract_features(inputs)
}
