use serde::{Deserialize, Serialize};

use super::MetricsError;

/// K x K counts; entry (i, j) counts samples of true class i predicted as j.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

/// Builds the confusion matrix of integer labels indexing `classes`.
pub fn confusion(truth: &[usize], predicted: &[usize], classes: &[String]) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch { left: truth.len(), right: predicted.len() });
    }
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= k || p >= k {
            return Err(MetricsError::UnknownLabel(t.max(p)));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { classes: classes.to_vec(), counts })
}

impl ConfusionMatrix {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes()).map(|k| self.counts[k][k]).sum()
    }

    pub fn tp(&self, k: usize) -> u64 {
        self.counts[k][k]
    }

    pub fn fp(&self, k: usize) -> u64 {
        (0..self.n_classes()).filter(|&i| i != k).map(|i| self.counts[i][k]).sum()
    }

    pub fn fn_(&self, k: usize) -> u64 {
        (0..self.n_classes()).filter(|&j| j != k).map(|j| self.counts[k][j]).sum()
    }

    pub fn tn(&self, k: usize) -> u64 {
        self.total() - self.tp(k) - self.fp(k) - self.fn_(k)
    }

    /// Number of samples whose true class is `k`.
    pub fn support(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }
}
