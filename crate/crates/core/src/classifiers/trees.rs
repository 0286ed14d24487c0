//! CART classification trees with Gini splits and their bagged ensemble.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { counts: Vec<u32> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Nodes in a flat arena; node 0 is the root. `x[feature] <= threshold` goes left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

fn gini(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &r in rows {
            c[self.y[r]] += 1;
        }
        c
    }

    /// Best (feature, threshold, weighted child impurity); ties keep the
    /// earliest feature and lowest threshold.
    fn best_split(&self, rows: &[usize]) -> Option<(usize, f64)> {
        let n = rows.len();
        let d = self.x[rows[0]].len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = rows.to_vec();
        for f in 0..d {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0u32; self.n_classes];
            let mut right = self.counts(rows);
            for s in 1..n {
                let moved = order[s - 1];
                left[self.y[moved]] += 1;
                right[self.y[moved]] -= 1;
                let (lo, hi) = (self.x[moved][f], self.x[order[s]][f]);
                if lo == hi || s < self.min_leaf || n - s < self.min_leaf {
                    continue;
                }
                let score = s as f64 * gini(&left, s as u32) + (n - s) as f64 * gini(&right, (n - s) as u32);
                if best.is_none_or(|b| score < b.2 - 1e-12) {
                    best = Some((f, 0.5 * (lo + hi), score));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&mut self, rows: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(&rows);
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || rows.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

impl Tree {
    pub fn fit(x: &[Vec<f64>], y: &[usize], rows: Vec<usize>, n_classes: usize, min_leaf: usize) -> Tree {
        let mut b = Builder { x, y, n_classes, min_leaf: min_leaf.max(1), nodes: Vec::new() };
        b.grow(rows);
        Tree { nodes: b.nodes }
    }

    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return counts,
                Node::Split { feature, threshold, left, right } => {
                    id = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the reached leaf; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let c = self.leaf_counts(x);
        let mut best = 0;
        for k in 1..c.len() {
            if c[k] > c[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaggingParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for BaggingParams {
    fn default() -> Self {
        BaggingParams { n_trees: 30, min_leaf: 1, bootstrap: true, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub n_classes: usize,
    pub trees: Vec<Tree>,
    pub seed: u64,
}

pub fn bagged_trees_train(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: &BaggingParams,
) -> Result<TreeEnsemble, ClassifierError> {
    if x.len() != y.len() {
        return Err(ClassifierError::LengthMismatch { rows: x.len(), labels: y.len() });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFinite);
    }
    if let Some(&l) = y.iter().find(|&&l| l >= n_classes) {
        return Err(ClassifierError::UnknownLabel(l));
    }
    let first = y.first().ok_or(ClassifierError::SingleClass)?;
    if y.iter().all(|l| l == first) {
        return Err(ClassifierError::SingleClass);
    }
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let trees = (0..params.n_trees.max(1))
        .map(|_| {
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::fit(x, y, rows, n_classes, params.min_leaf)
        })
        .collect();
    Ok(TreeEnsemble { n_classes, trees, seed: params.seed })
}

impl TreeEnsemble {
    /// Fraction of trees voting for each class.
    pub fn vote_fractions(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n_classes];
        for t in &self.trees {
            v[t.predict(x)] += 1.0;
        }
        let n = self.trees.len() as f64;
        v.iter_mut().for_each(|c| *c /= n);
        v
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let v = self.vote_fractions(x);
        let mut best = 0;
        for k in 1..v.len() {
            if v[k] > v[best] {
                best = k;
            }
        }
        best
    }
}
