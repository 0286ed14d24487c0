//! Sequential minimal optimization for the soft-margin SVM dual
//!
//! `min 1/2 a'Qa - e'a  s.t.  0 <= a_i <= C_i, y'a = 0`, `Q_ij = y_i y_j K_ij`,
//! with the maximal-violating-pair working set.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, KernelSpec};

/// Curvature floor for non positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Multipliers on C for the positive and negative class. Off (1, 1) by default.
    pub class_weight: (f64, f64),
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams { c: 1.0, tol: 1e-3, max_iter: 1_000_000, class_weight: (1.0, 1.0) }
    }
}

/// Raw solver output over the training indices.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the dual over `idx` using a precomputed kernel matrix `k` indexed by
/// the entries of `idx`.
pub fn solve_dual(k: &[Vec<f64>], idx: &[usize], y: &[f64], p: &SmoParams) -> Result<DualSolution, ClassifierError> {
    let n = idx.len();
    if n < 2 || !y.iter().any(|v| *v > 0.0) || !y.iter().any(|v| *v < 0.0) {
        return Err(ClassifierError::SingleClass);
    }
    if !(p.c > 0.0) || !(p.tol > 0.0) {
        return Err(ClassifierError::InvalidHyperparameter(format!("C = {}, tol = {}", p.c, p.tol)));
    }
    let cap: Vec<f64> = y
        .iter()
        .map(|&v| p.c * if v > 0.0 { p.class_weight.0 } else { p.class_weight.1 })
        .collect();
    let q = |i: usize, j: usize| y[i] * y[j] * k[idx[i]][idx[j]];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < p.max_iter {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < cap[t]) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] < 0.0 && alpha[t] < cap[t]) || (y[t] > 0.0 && alpha[t] > 0.0);
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < p.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (cap[i], cap[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Bias from free vectors, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= cap[t] {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free_sum += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 { free_sum / n_free as f64 } else { 0.5 * (ub + lb) };
    Ok(DualSolution { alpha, bias: -rho, iterations, converged })
}

/// A trained binary machine; `+1` is the positive class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmBinary {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    pub converged: bool,
}

impl SvmBinary {
    pub fn from_solution(x: &[Vec<f64>], idx: &[usize], y: &[f64], sol: &DualSolution, kernel: KernelSpec, c: f64) -> Self {
        let mut support_vectors = Vec::new();
        let mut coefs = Vec::new();
        for (t, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                support_vectors.push(x[idx[t]].clone());
                coefs.push(a * y[t]);
            }
        }
        SvmBinary { support_vectors, coefs, bias: sol.bias, kernel, c, converged: sol.converged }
    }

    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(|v| v.len())
    }

    /// `f(x) = sum_i alpha_i y_i K(x_i, x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(ClassifierError::DimensionMismatch { expected: d, found: x.len() });
            }
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.coefs)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias)
    }
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<(), ClassifierError> {
    if x.len() != y.len() {
        return Err(ClassifierError::LengthMismatch { rows: x.len(), labels: y.len() });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFinite);
    }
    if let Some(d) = x.first().map(|r| r.len()) {
        if let Some(r) = x.iter().find(|r| r.len() != d) {
            return Err(ClassifierError::DimensionMismatch { expected: d, found: r.len() });
        }
    }
    Ok(())
}

/// Trains a binary SVM on rows `x` with labels `y` in {-1, +1}.
pub fn smo_train(x: &[Vec<f64>], y: &[f64], kernel: KernelSpec, params: &SmoParams) -> Result<SvmBinary, ClassifierError> {
    check_inputs(x, y)?;
    kernel.validate()?;
    let gram = kernel.gram(x);
    let idx: Vec<usize> = (0..x.len()).collect();
    let sol = solve_dual(&gram, &idx, y, params)?;
    Ok(SvmBinary::from_solution(x, &idx, y, &sol, kernel, params.c))
}

/// Same as [`smo_train`] but also returns the dual variables for inspection.
pub fn smo_train_with_dual(
    x: &[Vec<f64>],
    y: &[f64],
    kernel: KernelSpec,
    params: &SmoParams,
) -> Result<(SvmBinary, DualSolution), ClassifierError> {
    check_inputs(x, y)?;
    kernel.validate()?;
    let gram = kernel.gram(x);
    let idx: Vec<usize> = (0..x.len()).collect();
    let sol = solve_dual(&gram, &idx, y, params)?;
    Ok((SvmBinary::from_solution(x, &idx, y, &sol, kernel, params.c), sol))
}
