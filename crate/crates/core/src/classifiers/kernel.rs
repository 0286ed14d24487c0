use serde::{Deserialize, Serialize};

use super::ClassifierError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `exp(-gamma |x - z|^2)`
    Gaussian { gamma: f64 },
    /// `(x.z / scale + 1)^degree`
    Polynomial { degree: u32, scale: f64 },
}

impl KernelSpec {
    /// Gaussian kernel with `gamma = 1 / scale^2`.
    pub fn gaussian_with_scale(scale: f64) -> Self {
        KernelSpec::Gaussian { gamma: 1.0 / (scale * scale) }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let ok = match *self {
            KernelSpec::Gaussian { gamma } => gamma > 0.0 && gamma.is_finite(),
            KernelSpec::Polynomial { degree, scale } => (2..=3).contains(&degree) && scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(ClassifierError::InvalidHyperparameter(format!("{self:?}")))
        }
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { gamma } => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Polynomial { degree, scale } => {
                let dot: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
                (dot / scale + 1.0).powi(degree as i32)
            }
        }
    }

    /// Full symmetric Gram matrix over `rows`.
    pub fn gram(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = rows.len();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.eval(&rows[i], &rows[j]);
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        g
    }
}
