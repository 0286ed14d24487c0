mod common;

use rand::Rng;
use voxtriage::fusion::{majority_vote_fuse, subject_accuracy_estimate};

// Tail sums evaluated offline in exact rational arithmetic.
const P805_K5: f64 = 0.945_848_055_643_75;
const P805_K11: f64 = 0.989_732_317_981_994_6;

#[test]
fn reported_values() {
    let a5 = subject_accuracy_estimate(0.805, 5).unwrap();
    let a11 = subject_accuracy_estimate(0.805, 11).unwrap();
    assert!((a5 - P805_K5).abs() < 1e-12);
    assert!((a11 - P805_K11).abs() < 1e-12);
    assert!((a5 - 0.946).abs() < 0.0005);
    assert!((a11 - 0.990).abs() < 0.001);
}

#[test]
fn degenerate_ends_and_monotone_in_odd_k() {
    for k in 1..=64 {
        assert_eq!(subject_accuracy_estimate(0.0, k).unwrap(), 0.0);
        assert_eq!(subject_accuracy_estimate(1.0, k).unwrap(), 1.0);
    }
    for p in [0.55, 0.7, 0.805, 0.95] {
        let v: Vec<f64> = (1..=15).step_by(2).map(|k| subject_accuracy_estimate(p, k).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0]), "{p}: {v:?}");
    }
}

/// Simulates subjects whose recordings are each correct with probability p,
/// errors spread uniformly over the other classes.
fn simulate(p: f64, k: u32, trials: usize, seed: u64) -> f64 {
    let mut r = common::rng(seed);
    let n_classes = 9;
    let mut correct = 0usize;
    for _ in 0..trials {
        let labels: Vec<usize> = (0..k)
            .map(|_| if r.random::<f64>() < p { 0 } else { r.random_range(1..n_classes) })
            .collect();
        if majority_vote_fuse(&labels, &[]).unwrap() == 0 {
            correct += 1;
        }
    }
    correct as f64 / trials as f64
}

/// Same simulation, but with two classes, so plurality is a strict majority
/// and the binomial tail applies exactly for odd k.
fn simulate_binary(p: f64, k: u32, trials: usize, seed: u64) -> f64 {
    let mut r = common::rng(seed);
    let mut correct = 0usize;
    for _ in 0..trials {
        let labels: Vec<usize> = (0..k).map(|_| if r.random::<f64>() < p { 0 } else { 1 }).collect();
        if majority_vote_fuse(&labels, &[]).unwrap() == 0 {
            correct += 1;
        }
    }
    correct as f64 / trials as f64
}

#[test]
fn monte_carlo_matches_estimate_at_reported_point() {
    let emp = simulate_binary(0.805, 5, 100_000, 1);
    assert!((emp - 0.946).abs() <= 0.003, "{emp}");
}

#[test]
fn monte_carlo_agrees_within_three_standard_errors() {
    let mut r = common::rng(77);
    for i in 0..20 {
        let p = r.random_range(0.05..0.95);
        let k = 2 * r.random_range(0..8) + 1;
        let trials = 20_000;
        let exact = subject_accuracy_estimate(p, k).unwrap();
        let emp = simulate_binary(p, k, trials, 1000 + i);
        let se = (exact * (1.0 - exact) / trials as f64).sqrt().max(1e-4);
        assert!((emp - exact).abs() <= 3.0 * se, "p={p} k={k}: {emp} vs {exact}");
    }
}

#[test]
fn plurality_over_many_classes_beats_binary_majority() {
    // With errors spread over 8 wrong classes, a plurality of correct votes is
    // easier to reach than a strict majority, so the estimate is a lower bound.
    let emp = simulate(0.6, 5, 50_000, 4);
    assert!(emp > subject_accuracy_estimate(0.6, 5).unwrap());
}
