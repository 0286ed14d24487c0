//! The three-stage hierarchy: CNN screener plus Stage-1 Gaussian SVM,
//! Stage-2 cubic SVM over etiological groups, Stage-3 quadratic SVM over the
//! nine diagnoses, each stage augmented with the previous stages' outputs,
//! and a flat bagged-trees baseline on the raw biomarkers.

mod bundle;
mod eval;
pub(crate) mod predict;
mod prepare;
mod train;
mod vectors;

use thiserror::Error;

use crate::classifiers::ClassifierError;
use crate::cnn::CnnError;
use crate::dataset::DiagnosisLabel;
use crate::metrics::MetricsError;
use crate::spectral::SpectralError;

pub use bundle::{
    BundleError, GroupTable, ModelBundle, Provenance, StageModel, StageSummary, BUNDLE_MAGIC, BUNDLE_VERSION,
};
pub use eval::{evaluate, write_stage_curves, EvalOutput, EvalReport, OracleUpstreamReport, REPORT_VERSION};
pub use predict::{predict_prepared, predict_recording, Prediction, Upstream, PREDICTION_CSV_HEADER};
pub use prepare::{data_digest, prepare_all, prepare_recording, PreparedRecording};
pub use train::{train_pipeline, Augmentation, PipelineConfig, TrainArtifacts};
pub use vectors::{
    build_stage1_vector, build_stage2_vector, build_stage3_vector, group_one_hot, stage1_label_from_prob, V1_DIM,
    V2_DIM, V3_DIM,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} vector has {found} entries, expected {expected}")]
    Dimension { stage: &'static str, expected: usize, found: usize },
    #[error("CNN probabilities {0:?} do not form a distribution")]
    Probabilities([f64; 2]),
    #[error("training partition has no recordings of {0}")]
    MissingClass(DiagnosisLabel),
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("recording {id}: {source}")]
    Extraction { id: String, source: SpectralError },
    #[error("stage outputs are inconsistent: {0}")]
    Inconsistent(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hex digest helper shared by bundle, data and config fingerprints.
pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Independent sub-seeds from one run seed (splitmix64 finalizer).
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests;
