//! Convolutional spectrogram screener with hand-written backpropagation.
//!
//! Three blocks of 3x3 same-padded convolution, ReLU, batch norm and 2x2
//! max-pool feed a single affine layer and a two-way softmax ordered
//! (NonPathological, Pathological). The network is generic over `f32`
//! (training and inference) and `f64` (gradient checking).

mod gradcheck;
mod model;
pub mod ops;
mod train;

use std::fmt::Debug;
use std::iter::Sum;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gradcheck::{cnn_backward_check, FD_STEP};
pub use model::{Block, BlockGrad, CnnModel, ForwardCache, Gradients, Mode};
pub use train::{
    cnn_train, predict_proba, to_batch, train_step, write_training_log, Adam, EarlyStopper, EpochLog, ImageSet,
    TRAINING_LOG_HEADER,
};

pub const N_OUTPUTS: usize = 2;
pub const DEFAULT_FILTERS: [usize; 3] = [32, 64, 128];
pub const DEFAULT_INPUT: (usize, usize) = (128, 256);

pub trait CnnFloat:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + Debug
    + Sum
    + Send
    + Sync
    + 'static
{
}
impl CnnFloat for f32 {}
impl CnnFloat for f64 {}

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("label {0} is not 0 or 1")]
    BadLabel(usize),
    #[error("loss became non-finite in epoch {epoch} (batch {batch})")]
    Diverged { epoch: usize, batch: usize },
    #[error("corrupt model tensors: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub filters: [usize; 3],
    /// Input (mel bands, frames).
    pub input_shape: (usize, usize),
    pub epochs_max: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// `None` disables early stopping.
    pub patience: Option<usize>,
    pub batch_size: usize,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            filters: DEFAULT_FILTERS,
            input_shape: DEFAULT_INPUT,
            epochs_max: 50,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: Some(5),
            batch_size: 32,
            bn_momentum: 0.1,
            seed: 0,
        }
    }
}

impl CnnConfig {
    /// Gradient-check variant: filters (2, 2, 2) on 16x16 inputs.
    pub fn tiny(seed: u64) -> Self {
        CnnConfig {
            filters: [2, 2, 2],
            input_shape: (16, 16),
            seed,
            ..CnnConfig::default()
        }
    }

    pub fn is_full_size(&self) -> bool {
        self.filters == DEFAULT_FILTERS && self.input_shape == DEFAULT_INPUT
    }

    /// Width of the flattened final feature map.
    pub fn flatten_dim(&self) -> usize {
        self.filters[2] * (self.input_shape.0 / 8) * (self.input_shape.1 / 8)
    }

    pub fn validate(&self) -> Result<(), CnnError> {
        let bad = |m: &str| Err(CnnError::InvalidConfig(m.into()));
        let (h, w) = self.input_shape;
        if h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0 {
            return bad("input sides must be positive multiples of 8");
        }
        if self.filters.contains(&0) {
            return bad("filter counts must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) {
            return bad("learning rate and Adam epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return bad("batch-norm momentum must lie in (0, 1]");
        }
        Ok(())
    }
}
