//! Feed-forward ReLU predictor of RoCoF and frequency nadir.

mod dataset;
mod mlp;
mod model;
mod normalize;
mod train;

use thiserror::Error;

pub use dataset::{Sample, ScenarioDataset, Split};
pub use mlp::{
    fold_normalization, forward, forward_trace, grad, loss, ForwardTrace, Layer, MlpParams, MlpSpec,
};
pub use model::{ModelFile, ModelMetadata};
pub use normalize::Normalizer;
pub use train::{
    predict_split, regression_metrics, train, EpochLoss, RegressionMetrics, TrainConfig,
    TrainOutcome,
};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty data slice")]
    EmptySlice,
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("non-finite parameter")]
    NonFinite,
    #[error("normalizer scale must be strictly positive")]
    ZeroScale,
    #[error("training diverged at epoch {epoch}: validation loss {val_loss:.3e} vs initial {initial:.3e}")]
    Diverged {
        epoch: usize,
        val_loss: f64,
        initial: f64,
    },
    #[error("dataset has {found} rows, at least {required} required")]
    TooFewRows { found: usize, required: usize },
    #[error("dataset has no `{0}` rows")]
    MissingSplit(&'static str),
    #[error("bad dataset: {0}")]
    Data(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("model json: {0}")]
    Json(String),
    #[error("io: {0}")]
    Io(String),
}
