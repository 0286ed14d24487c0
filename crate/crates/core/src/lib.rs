// `!(x > 0.0)` is used throughout to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biomarkers;
pub mod classifiers;
pub mod cnn;
pub mod dataset;
pub mod fusion;
pub mod metrics;
pub mod pipeline;
pub mod spectral;
