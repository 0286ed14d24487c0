//! Fused stage inputs. Every constructor checks its width against the
//! dimension ledger and fails fast on a mismatch.

use crate::biomarkers::{FeatureVector21, N_FEATURES};
use crate::dataset::EtiologyGroup;

use super::PipelineError;

pub const V1_DIM: usize = 23;
pub const V2_DIM: usize = 22;
pub const V3_DIM: usize = 25;

/// Tolerance on the two CNN probabilities summing to one.
const PROB_SUM_TOL: f64 = 1e-6;

pub(crate) fn check_dim(stage: &'static str, v: &[f64], expected: usize) -> Result<(), PipelineError> {
    if v.len() != expected {
        return Err(PipelineError::Dimension { stage, expected, found: v.len() });
    }
    Ok(())
}

/// Stage-1 binary decision from the probability of pathology; exactly 0.5
/// counts as pathological.
pub fn stage1_label_from_prob(p_path: f64) -> u8 {
    u8::from(p_path >= 0.5)
}

/// `[21 biomarkers, p_nonpath, p_path]`.
pub fn build_stage1_vector(f: &FeatureVector21, cnn_probs: [f64; 2]) -> Result<Vec<f64>, PipelineError> {
    let sum = cnn_probs[0] + cnn_probs[1];
    if !((sum - 1.0).abs() <= PROB_SUM_TOL) || cnn_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(PipelineError::Probabilities(cnn_probs));
    }
    let mut v = Vec::with_capacity(V1_DIM);
    v.extend_from_slice(f.as_slice());
    v.extend_from_slice(&cnn_probs);
    check_dim("stage1", &v, V1_DIM)?;
    Ok(v)
}

/// `[21 biomarkers, stage-1 indicator]`. The indicator is 0/1 for hard
/// augmentation or a soft score in [0, 1].
pub fn build_stage2_vector(f: &FeatureVector21, stage1: f64) -> Result<Vec<f64>, PipelineError> {
    let mut v = Vec::with_capacity(V2_DIM);
    v.extend_from_slice(f.as_slice());
    v.push(stage1);
    check_dim("stage2", &v, V2_DIM)?;
    Ok(v)
}

/// One-hot of a group in (Healthy, FunctionalPsychogenic, StructuralInflammatory) order.
pub fn group_one_hot(g: EtiologyGroup) -> [f64; 3] {
    let mut o = [0.0; 3];
    o[g.index()] = 1.0;
    o
}

/// `[21 biomarkers, stage-1 indicator, 3 group weights]`; the weights are a
/// one-hot for hard augmentation.
pub fn build_stage3_vector(f: &FeatureVector21, stage1: f64, group: [f64; 3]) -> Result<Vec<f64>, PipelineError> {
    let mut v = Vec::with_capacity(V3_DIM);
    v.extend_from_slice(f.as_slice());
    v.push(stage1);
    v.extend_from_slice(&group);
    check_dim("stage3", &v, V3_DIM)?;
    Ok(v)
}

pub(crate) fn raw_features(v: &[f64]) -> &[f64] {
    &v[..N_FEATURES]
}
