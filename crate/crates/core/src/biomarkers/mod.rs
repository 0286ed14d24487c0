//! Handcrafted acoustic biomarkers: F0, jitter, shimmer, HNR, formants, and
//! the 21-entry feature vector built from them.

mod autocorr;
mod cycles;
mod features;
mod formants;
mod hnr;
mod pitch;

use thiserror::Error;

pub use cycles::{detect_cycles, jitter_local, shimmer_local, CycleMarks};
pub use features::{
    assemble_features, read_feature_csv, write_feature_csv, FeatureRow, FeatureVector21,
    FEATURE_CSV_HEADER, FEATURE_NAMES, N_FEATURES,
};
pub use formants::{formants_lpc, Formants, LPC_ORDER, LPC_RATE};
pub use hnr::{hnr, hnr_from_r, HNR_MAX_DB, HNR_MIN_DB};
pub use pitch::{estimate_f0, DEFAULT_FMAX, DEFAULT_FMIN, VOICING_THRESHOLD};

#[derive(Debug, Error, PartialEq)]
pub enum BiomarkerError {
    #[error("signal of {len} samples is shorter than the {needed} required")]
    SignalTooShort { len: usize, needed: usize },
    #[error("only {found} glottal cycles found; at least 3 are required")]
    TooFewCycles { found: usize },
    #[error("no voiced frame in the signal")]
    Unvoiced,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("feature table: {0}")]
    Table(String),
}
