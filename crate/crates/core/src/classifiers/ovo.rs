use serde::{Deserialize, Serialize};

use super::smo::{solve_dual, SmoParams, SvmBinary};
use super::{ClassifierError, KernelSpec};

/// One binary machine per unordered class pair `(a, b)`, `a < b`, with `a` as
/// the positive class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvoSvm {
    pub n_classes: usize,
    pub machines: Vec<((usize, usize), SvmBinary)>,
}

/// Per-class scores and the voted label for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct OvoOutput {
    pub scores: Vec<f64>,
    pub votes: Vec<usize>,
    pub label: usize,
}

/// Fits all pairwise machines. `gram` is the kernel matrix over all of `x`;
/// `subset` selects the training rows.
pub fn ovo_fit_with_gram(
    x: &[Vec<f64>],
    labels: &[usize],
    subset: &[usize],
    n_classes: usize,
    gram: &[Vec<f64>],
    kernel: KernelSpec,
    params: &SmoParams,
) -> Result<OvoSvm, ClassifierError> {
    if n_classes < 2 {
        return Err(ClassifierError::SingleClass);
    }
    let mut machines = Vec::with_capacity(n_classes * (n_classes - 1) / 2);
    for a in 0..n_classes {
        for b in a + 1..n_classes {
            let idx: Vec<usize> = subset.iter().copied().filter(|&i| labels[i] == a || labels[i] == b).collect();
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            let sol = solve_dual(gram, &idx, &y, params).map_err(|e| match e {
                ClassifierError::SingleClass => ClassifierError::MissingClassPair(a, b),
                e => e,
            })?;
            machines.push(((a, b), SvmBinary::from_solution(x, &idx, &y, &sol, kernel, params.c)));
        }
    }
    Ok(OvoSvm { n_classes, machines })
}

pub fn ovo_fit(
    x: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    kernel: KernelSpec,
    params: &SmoParams,
) -> Result<OvoSvm, ClassifierError> {
    if x.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch { rows: x.len(), labels: labels.len() });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFinite);
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ClassifierError::UnknownLabel(l));
    }
    kernel.validate()?;
    let gram = kernel.gram(x);
    let all: Vec<usize> = (0..x.len()).collect();
    ovo_fit_with_gram(x, labels, &all, n_classes, &gram, kernel, params)
}

impl OvoSvm {
    /// Signed decision values summed per class; the label wins the most
    /// pairwise votes, then the highest score, then the lowest index. A zero
    /// decision value votes for the lower class index.
    pub fn predict_scores(&self, x: &[f64]) -> Result<OvoOutput, ClassifierError> {
        if self.machines.is_empty() {
            return Err(ClassifierError::Unfitted);
        }
        let mut scores = vec![0.0; self.n_classes];
        let mut votes = vec![0usize; self.n_classes];
        for &((a, b), ref m) in &self.machines {
            let f = m.decision(x)?;
            scores[a] += f;
            scores[b] -= f;
            if f >= 0.0 {
                votes[a] += 1;
            } else {
                votes[b] += 1;
            }
        }
        let mut label = 0;
        for c in 1..self.n_classes {
            if votes[c] > votes[label] || (votes[c] == votes[label] && scores[c] > scores[label]) {
                label = c;
            }
        }
        Ok(OvoOutput { scores, votes, label })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ClassifierError> {
        Ok(self.predict_scores(x)?.label)
    }
}
