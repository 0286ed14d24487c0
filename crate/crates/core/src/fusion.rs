//! Subject-level fusion of repeated-vowel predictions: the binomial
//! majority-vote accuracy estimate and an empirical plurality fuser.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest `k` for which binomial coefficients are tabulated exactly.
pub const MAX_K: u32 = 64;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("accuracy {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("k = {0} is outside 1..=64")]
    KOutOfRange(u32),
    #[error("no recordings to fuse")]
    Empty,
    #[error("score vectors differ in length")]
    ScoreWidth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionEstimate {
    pub p: f64,
    pub k: u32,
    pub acc_subject: f64,
}

/// `C(n, r)` exactly; fits in u128 for n <= 64.
fn binomial(n: u32, r: u32) -> u128 {
    let r = r.min(n - r);
    let mut c: u128 = 1;
    for i in 0..r {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// `sum_{i = ceil(k/2)}^{k} C(k, i) p^i (1 - p)^(k - i)`.
///
/// For even `k` the lower limit admits the exact-tie term, so a tie counts as
/// a correct subject decision.
pub fn subject_accuracy_estimate(p: f64, k: u32) -> Result<f64, FusionError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FusionError::ProbabilityOutOfRange(p));
    }
    if k == 0 || k > MAX_K {
        return Err(FusionError::KOutOfRange(k));
    }
    let q = 1.0 - p;
    let sum: f64 = (k.div_ceil(2)..=k)
        .map(|i| binomial(k, i) as f64 * p.powi(i as i32) * q.powi((k - i) as i32))
        .sum();
    Ok(sum.clamp(0.0, 1.0))
}

pub fn estimate(p: f64, k: u32) -> Result<FusionEstimate, FusionError> {
    Ok(FusionEstimate { p, k, acc_subject: subject_accuracy_estimate(p, k)? })
}

/// Plurality vote over per-recording labels. Ties go to the label with the
/// highest summed score, then to the lowest class index.
pub fn majority_vote_fuse(labels: &[usize], scores: &[Vec<f64>]) -> Result<usize, FusionError> {
    if labels.is_empty() {
        return Err(FusionError::Empty);
    }
    let width = scores.first().map_or(0, |s| s.len());
    if scores.iter().any(|s| s.len() != width) || (!scores.is_empty() && scores.len() != labels.len()) {
        return Err(FusionError::ScoreWidth);
    }
    let n_classes = width.max(labels.iter().max().unwrap() + 1);
    let mut votes = vec![0usize; n_classes];
    for &l in labels {
        votes[l] += 1;
    }
    let mut summed = vec![0.0; n_classes];
    for s in scores {
        for (acc, v) in summed.iter_mut().zip(s) {
            *acc += v;
        }
    }
    let mut best = 0;
    for c in 1..n_classes {
        let better = votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] > summed[best]);
        if better {
            best = c;
        }
    }
    Ok(best)
}
