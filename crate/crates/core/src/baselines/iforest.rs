//! Isolation forest: random split trees over independent subsamples;
//! anomalies isolate in few splits.
//!
//! Score law: `s(x, ψ) = 2^(−E[h(x)] / c(ψ))` with the path-length
//! normalizer `c(n) = 2·H(n−1) − 2(n−1)/n`, `H(i) = ln(i) + γ`
//! (Euler–Mascheroni γ). Unsuccessful isolation at the height limit adds
//! `c(leaf_size)` to the path length.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.5772156649;

/// Average unsuccessful-search path length in a BST of n nodes.
pub fn c_factor(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    2.0 * (((nf - 1.0).ln()) + EULER_GAMMA) - 2.0 * (nf - 1.0) / nf
}

#[derive(Debug, Clone)]
enum Node {
    Split { dim: usize, value: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn path_length(&self, x: &ArrayView1<f64>) -> f64 {
        let mut idx = 0usize;
        let mut depth = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { size } => return depth as f64 + c_factor(*size),
                Node::Split { dim, value, left, right } => {
                    idx = if x[*dim] < *value { *left } else { *right };
                    depth += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    /// Effective subsample size ψ used for normalization.
    pub psi: usize,
    c_psi: f64,
}

fn build_node(
    data: &Array2<f64>,
    rows: &mut [usize],
    depth: usize,
    limit: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    if depth >= limit || rows.len() <= 1 {
        nodes.push(Node::Leaf { size: rows.len() });
        return nodes.len() - 1;
    }
    // dimensions that still vary within this node
    let d = data.ncols();
    let mut valid: Vec<(usize, f64, f64)> = Vec::new();
    for dim in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &r in rows.iter() {
            let v = data[[r, dim]];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            valid.push((dim, lo, hi));
        }
    }
    if valid.is_empty() {
        nodes.push(Node::Leaf { size: rows.len() });
        return nodes.len() - 1;
    }
    let (dim, lo, hi) = valid[rng.random_range(0..valid.len())];
    let value = rng.random_range(lo..hi);
    let split = itertools_partition(rows, |&r| data[[r, dim]] < value);
    let (left_rows, right_rows) = rows.split_at_mut(split);
    // value ∈ (lo, hi) guarantees both sides are non-empty except for
    // degenerate float edges; fall back to a leaf in that case
    if left_rows.is_empty() || right_rows.is_empty() {
        nodes.push(Node::Leaf { size: left_rows.len() + right_rows.len() });
        return nodes.len() - 1;
    }
    let placeholder = nodes.len();
    nodes.push(Node::Leaf { size: 0 });
    let left = build_node(data, left_rows, depth + 1, limit, rng, nodes);
    let right = build_node(data, right_rows, depth + 1, limit, rng, nodes);
    nodes[placeholder] = Node::Split { dim, value, left, right };
    placeholder
}

/// Stable in-place partition; returns the split point.
fn itertools_partition<T, P: Fn(&T) -> bool>(slice: &mut [T], pred: P) -> usize {
    let mut split = 0usize;
    for i in 0..slice.len() {
        if pred(&slice[i]) {
            slice.swap(split, i);
            split += 1;
        }
    }
    split
}

impl IsolationForest {
    /// Fit `t` trees on independent subsamples of size ψ (clamped to the
    /// fit-set size). Deterministic per seed.
    pub fn fit(data: &Array2<f64>, t: usize, psi: usize, seed: u64) -> Result<Self> {
        let n = data.nrows();
        if n == 0 {
            return Err(Error::EmptyInput("isolation forest fit set empty".into()));
        }
        if t == 0 {
            return Err(Error::Config("isolation forest needs at least one tree".into()));
        }
        if psi < 2 {
            return Err(Error::Config("isolation forest subsample must be >= 2".into()));
        }
        let psi = psi.min(n);
        let limit = (psi as f64).log2().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trees = Vec::with_capacity(t);
        for _ in 0..t {
            let mut rows: Vec<usize> =
                rand::seq::index::sample(&mut rng, n, psi).into_iter().collect();
            let mut nodes = Vec::new();
            build_node(data, &mut rows, 0, limit.max(1), &mut rng, &mut nodes);
            trees.push(Tree { nodes });
        }
        Ok(IsolationForest { trees, psi, c_psi: c_factor(psi) })
    }

    /// Expected path length over the ensemble.
    pub fn mean_path_length(&self, x: &ArrayView1<f64>) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Anomaly score in (0, 1); 0.5 when `E[h(x)] = c(ψ)`.
    pub fn score(&self, x: &ArrayView1<f64>) -> f64 {
        let eh = self.mean_path_length(x);
        if self.c_psi == 0.0 {
            return 0.5;
        }
        2f64.powf(-eh / self.c_psi)
    }

    pub fn score_slice(&self, x: &[f64]) -> f64 {
        self.score(&ArrayView1::from(x))
    }

    /// The normalizer used by the score law.
    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{auc, LabeledScore};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn c_factor_matches_formula() {
        // c(2) = 2·(ln 1 + γ) − 2·(1/2) = 2γ − 1
        assert_abs_diff_eq!(c_factor(2), 2.0 * EULER_GAMMA - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c_factor(2), 0.1544313298, epsilon = 1e-9);
        // c(256) for the default subsample
        let n = 256.0f64;
        let want = 2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n;
        assert_abs_diff_eq!(c_factor(256), want, epsilon = 1e-12);
        assert_eq!(c_factor(1), 0.0);
        assert_eq!(c_factor(0), 0.0);
    }

    #[test]
    fn score_is_half_when_path_equals_c_psi() {
        // E[h] = c(ψ) ⇒ 2^(−1) = 0.5 by the score law
        let c = c_factor(128);
        assert_abs_diff_eq!(2f64.powf(-c / c), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn constant_data_scores_half_everywhere() {
        let data = Array2::from_elem((64, 3), 1.5);
        let forest = IsolationForest::fit(&data, 25, 32, 3).unwrap();
        for row in data.rows().into_iter().take(5) {
            assert_abs_diff_eq!(forest.score(&row), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = Array2::from_shape_fn((300, 2), |_| rng.random_range(-1.0..1.0));
        let a = IsolationForest::fit(&data, 50, 64, 9).unwrap();
        let b = IsolationForest::fit(&data, 50, 64, 9).unwrap();
        let c = IsolationForest::fit(&data, 50, 64, 10).unwrap();
        let probe = data.row(0);
        assert_eq!(a.score(&probe), b.score(&probe));
        assert_ne!(a.score(&probe), c.score(&probe));
    }

    #[test]
    fn path_length_bounded_by_limit_plus_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = Array2::from_shape_fn((500, 2), |_| rng.random_range(-1.0..1.0));
        let psi = 64usize;
        let forest = IsolationForest::fit(&data, 40, psi, 2).unwrap();
        let limit = (psi as f64).log2().ceil();
        let bound = limit + c_factor(psi);
        for row in data.rows().into_iter().take(50) {
            assert!(forest.mean_path_length(&row) <= bound + 1e-9);
        }
    }

    #[test]
    fn gaussian_cluster_with_far_outliers_ranks_them_on_top() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let n_in = 500;
        let n_out = 10;
        let mut data = Array2::zeros((n_in + n_out, 2));
        for i in 0..n_in {
            // Box-Muller from the seeded stream
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            data[[i, 0]] = r * (2.0 * std::f64::consts::PI * u2).cos();
            data[[i, 1]] = r * (2.0 * std::f64::consts::PI * u2).sin();
        }
        for i in 0..n_out {
            let angle = i as f64 / n_out as f64 * std::f64::consts::TAU;
            data[[n_in + i, 0]] = 12.0 * angle.cos();
            data[[n_in + i, 1]] = 12.0 * angle.sin();
        }
        let forest = IsolationForest::fit(&data, 100, 256, 7).unwrap();
        let scores: Vec<LabeledScore> = (0..n_in + n_out)
            .map(|i| LabeledScore::new(forest.score(&data.row(i)), i >= n_in, 0))
            .collect();
        let roc = auc(&scores).unwrap();
        assert!(roc >= 0.95, "auc {roc}");
        // outliers occupy the top-10 scores
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].score.partial_cmp(&scores[a].score).unwrap());
        assert!(order[..n_out].iter().all(|&i| i >= n_in));
    }
}
