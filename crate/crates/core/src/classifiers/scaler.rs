use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Column-wise mean imputation of NaN sentinels followed by z-scoring, fit
/// on training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    /// Mean of the non-sentinel training values, used to fill sentinels.
    pub impute: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero training variance; their std is set to 1.
    pub constant: Vec<bool>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Scaler, ClassifierError> {
        let d = rows.first().ok_or(ClassifierError::EmptyTrainingSet)?.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(ClassifierError::DimensionMismatch { expected: d, found: r.len() });
        }
        let n = rows.len() as f64;
        let mut impute = vec![0.0; d];
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        let mut constant = vec![false; d];
        for j in 0..d {
            let present: Vec<f64> = rows.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
            impute[j] = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
            let col: Vec<f64> = rows.iter().map(|r| if r[j].is_finite() { r[j] } else { impute[j] }).collect();
            mean[j] = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 1e-24 * (1.0 + mean[j] * mean[j]) {
                std[j] = var.sqrt();
            } else {
                constant[j] = true;
            }
        }
        Ok(Scaler { impute, mean, std, constant })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if row.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch { expected: self.dim(), found: row.len() });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let v = if v.is_finite() { v } else { self.impute[j] };
                if self.constant[j] {
                    0.0
                } else {
                    (v - self.mean[j]) / self.std[j]
                }
            })
            .collect())
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ClassifierError> {
        rows.iter().map(|r| self.apply(r)).collect()
    }

    /// Training-set imputation without scaling.
    pub fn impute_only(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &v)| if v.is_finite() { v } else { self.impute[j] }).collect()
    }
}
