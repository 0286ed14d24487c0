//! Stage classifiers: SMO-trained kernel SVMs, one-vs-one multiclass voting,
//! bagged CART trees, feature standardization and cross-validated grid search.

mod grid;
mod kernel;
mod ovo;
mod scaler;
mod smo;
mod trees;

use thiserror::Error;

pub use grid::{
    default_grid, grid_from, grid_search_cv, grid_search_cv_with_folds, grouped_stratified_folds, select_best,
    stratified_folds, write_cv_csv, CvRow, GridPoint, GridResult,
    SvmFamily, C_GRID, SCALE_FACTORS,
};
pub use kernel::KernelSpec;
pub use ovo::{ovo_fit, ovo_fit_with_gram, OvoOutput, OvoSvm};
pub use scaler::Scaler;
pub use smo::{smo_train, smo_train_with_dual, solve_dual, DualSolution, SmoParams, SvmBinary};
pub use trees::{bagged_trees_train, BaggingParams, Node, Tree, TreeEnsemble};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training data must contain at least two classes")]
    SingleClass,
    #[error("no training samples for class pair ({0}, {1})")]
    MissingClassPair(usize, usize),
    #[error("non-finite feature value")]
    NonFinite,
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("label {0} is outside the class list")]
    UnknownLabel(usize),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("class {class} has {count} sample(s); stratified folds need at least 2")]
    TooFewForFolds { class: usize, count: usize },
    #[error("model has not been fitted")]
    Unfitted,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("write failed: {0}")]
    Io(String),
}
