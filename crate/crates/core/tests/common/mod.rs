//! Naive reference implementations shared by the oracle and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxtriage::classifiers::KernelSpec;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exhaustive pair count: P(score_pos > score_neg) + 0.5 P(tie).
pub fn pairwise_auc(scores: &[f64], relevant: &[bool]) -> f64 {
    let mut count = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if relevant[i] && !relevant[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    count += 1.0;
                } else if scores[i] == scores[j] {
                    count += 0.5;
                }
            }
        }
    }
    count / pairs
}

/// Rank walk: each positive takes the precision among everything scored at
/// least as high as it.
pub fn naive_average_precision(scores: &[f64], relevant: &[bool]) -> f64 {
    let n_pos = relevant.iter().filter(|r| **r).count() as f64;
    let mut total = 0.0;
    for i in 0..scores.len() {
        if !relevant[i] {
            continue;
        }
        let above: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] >= scores[i]).collect();
        let hits = above.iter().filter(|&&j| relevant[j]).count() as f64;
        total += hits / above.len() as f64;
    }
    total / n_pos
}

/// Per-class (precision, recall, f1, support) counted straight from label pairs.
pub fn naive_prf(truth: &[usize], pred: &[usize], k: usize) -> Vec<(f64, f64, f64, f64)> {
    (0..k)
        .map(|c| {
            let tp = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p == c).count() as f64;
            let predicted = pred.iter().filter(|p| **p == c).count() as f64;
            let actual = truth.iter().filter(|t| **t == c).count() as f64;
            let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let r = if actual > 0.0 { tp / actual } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (p, r, f, actual)
        })
        .collect()
}

/// Random scores on a coarse grid so that ties are common.
pub fn random_scored_set(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    loop {
        let grid = rng.random_range(2..40) as f64;
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * grid).floor() / grid).collect();
        let prevalence = rng.random_range(0.05..0.95);
        let relevant: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < prevalence).collect();
        if relevant.iter().any(|r| *r) && relevant.iter().any(|r| !*r) {
            return (scores, relevant);
        }
    }
}

/// Objective of the SVM dual, `sum a - 1/2 sum_ij a_i a_j y_i y_j K_ij`.
pub fn dual_objective(alpha: &[f64], y: &[f64], gram: &[Vec<f64>]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * gram[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Projection onto `{0 <= a <= c, y.a = 0}` by bisection on the multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
    let g = |mu: f64| -> f64 { at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Dense accelerated projected-gradient solver for the SVM dual.
pub fn qp_oracle(y: &[f64], gram: &[Vec<f64>], c: f64) -> Vec<f64> {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * gram[i][j]).collect()).collect();
    // Lipschitz constant bound from the largest absolute row sum.
    let lip = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(1e-12, f64::max);
    let step = 1.0 / lip;
    let objective = |a: &[f64]| dual_objective(a, y, gram);
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = objective(&x);
    for _ in 0..200_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * z[j]).sum::<f64>()).collect();
        let next = project(&z.iter().zip(&grad).map(|(zi, gi)| zi + step * gi).collect::<Vec<_>>(), y, c);
        let value = objective(&next);
        let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        if value < best {
            // adaptive restart: drop the momentum when the objective falls back
            t = 1.0;
            z = x.clone();
            continue;
        }
        best = value;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect();
        x = next;
        t = t_next;
        if moved < 1e-14 {
            break;
        }
    }
    x
}

/// Bias from a dual solution: mean over free vectors of `y_i - sum_j a_j y_j K_ij`,
/// or the midpoint of the feasible interval when no vector is free.
pub fn oracle_bias(alpha: &[f64], y: &[f64], gram: &[Vec<f64>], c: f64) -> f64 {
    let n = alpha.len();
    let f0 = |i: usize| (0..n).map(|j| alpha[j] * y[j] * gram[i][j]).sum::<f64>();
    let eps = 1e-7 * c;
    let free: Vec<f64> = (0..n).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).map(|i| y[i] - f0(i)).collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let r = y[i] - f0(i);
        let at_upper = alpha[i] >= c - eps;
        // y_i f(x_i) >= 1 at the lower bound, <= 1 at the upper bound
        if (y[i] > 0.0) != at_upper {
            lo = lo.max(r);
        } else {
            hi = hi.min(r);
        }
    }
    0.5 * (lo + hi)
}

/// Largest KKT violation of a trained decision function on its training points.
pub fn kkt_residual(alpha: &[f64], y: &[f64], decisions: &[f64], c: f64) -> f64 {
    let eps = 1e-9 * c.max(1.0);
    alpha
        .iter()
        .zip(y)
        .zip(decisions)
        .map(|((&a, &yi), &f)| {
            let m = yi * f;
            if a <= eps {
                (1.0 - m).max(0.0)
            } else if a >= c - eps {
                (m - 1.0).max(0.0)
            } else {
                (m - 1.0).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Random binary SVM problem: n in 4..=12, d in 1..=3, the kernel cycling
/// through Gaussian, quadratic and cubic with the seed.
pub struct Problem {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub kernel: KernelSpec,
    pub c: f64,
}

pub fn random_problem(seed: u64) -> Problem {
    let mut r = rng(seed);
    let n = r.random_range(4..=12);
    let d = r.random_range(1..=3);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let mut y: Vec<f64> = (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let kernel = match seed % 3 {
        0 => KernelSpec::Gaussian { gamma: r.random_range(0.2..2.0) },
        1 => KernelSpec::Polynomial { degree: 2, scale: r.random_range(0.5..4.0) },
        _ => KernelSpec::Polynomial { degree: 3, scale: r.random_range(1.0..6.0) },
    };
    let c = [0.1, 1.0, 10.0][r.random_range(0..3)];
    Problem { x, y, kernel, c }
}

pub fn probes(p: &Problem, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let d = p.x[0].len();
    (0..100).map(|_| (0..d).map(|_| r.random_range(-2.5..2.5)).collect()).collect()
}
