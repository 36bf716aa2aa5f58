//! Gradient-boosted regression trees on the logistic loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_rounds: usize,
    /// L2 regulariser on leaf weights.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { weight: f64 },
}

/// Binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub trees: Vec<RegressionTree>,
    /// Log-odds of the training prevalence.
    pub base_score: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    /// Mean training log-loss before the first tree and after each round.
    pub training_loss: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Optimal leaf weight `-G / (H + lambda)`.
pub fn leaf_weight(grad: f64, hess: f64, lambda: f64) -> f64 {
    -grad / (hess + lambda)
}

/// Loss reduction of splitting a node into (left, right).
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
        - (gl + gr) * (gl + gr) / (hl + hr + lambda))
}

/// Mean log-loss of margins against labels.
pub fn log_loss(margins: &[f64], y: &[u8]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &l)| {
            // log(1 + e^m) - y m, computed without overflow
            let softplus = m.max(0.0) + (-m.abs()).exp().ln_1p();
            softplus - f64::from(l) * m
        })
        .sum();
    total / margins.len() as f64
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Midpoint between consecutive distinct values, kept inside `[lo, hi)`.
fn split_point(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= lo && mid < hi {
        mid
    } else {
        lo
    }
}

pub fn gbdt_fit(x: &FeatureMatrix, y: &[u8], params: &GbdtParams) -> Result<GbdtModel> {
    let n = x.n_rows();
    let d = x.n_cols();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!("{} labels for {n} rows", y.len())));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::SingleClass);
    }
    if params.max_depth == 0 || !(params.learning_rate > 0.0) || params.lambda < 0.0 {
        return Err(Error::Config("invalid gradient boosting parameters".into()));
    }
    let values = x.values();
    let prevalence = pos as f64 / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();

    // Each feature's rows sorted by value, ties by row index.
    let sorted: Vec<Vec<u32>> = (0..d)
        .into_par_iter()
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                values[a as usize * d + f]
                    .total_cmp(&values[b as usize * d + f])
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut margins = vec![base_score; n];
    let mut training_loss = vec![log_loss(&margins, y)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..params.n_rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - f64::from(y[i]);
            hess[i] = p * (1.0 - p);
        }
        let (tree, leaf_of) = build_tree(values, d, &sorted, &grad, &hess, params);
        for i in 0..n {
            if let TreeNode::Leaf { weight } = tree.nodes[leaf_of[i] as usize] {
                margins[i] += params.learning_rate * weight;
            }
        }
        training_loss.push(log_loss(&margins, y));
        trees.push(tree);
    }

    Ok(GbdtModel {
        trees,
        base_score,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        lambda: params.lambda,
        training_loss,
    })
}

/// Level-wise exact greedy tree. Returns the tree and each row's leaf.
fn build_tree(
    values: &[f64],
    d: usize,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    params: &GbdtParams,
) -> (RegressionTree, Vec<u32>) {
    let n = grad.len();
    let lambda = params.lambda;
    let mut nodes = vec![TreeNode::Leaf { weight: 0.0 }];
    let mut node_of = vec![0u32; n];
    let mut totals = vec![(grad.iter().sum::<f64>(), hess.iter().sum::<f64>())];
    // Open nodes at the current level; `slot_of[node]` indexes into it.
    let mut open: Vec<usize> = vec![0];

    for _depth in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let mut slot_of = vec![usize::MAX; nodes.len()];
        for (s, &node) in open.iter().enumerate() {
            slot_of[node] = s;
        }
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..d)
            .into_par_iter()
            .map(|f| {
                let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
                let mut acc = vec![(0.0f64, 0.0f64); open.len()];
                let mut last: Vec<Option<f64>> = vec![None; open.len()];
                for &i in &sorted[f] {
                    let i = i as usize;
                    let s = slot_of[node_of[i] as usize];
                    if s == usize::MAX {
                        continue;
                    }
                    let v = values[i * d + f];
                    if let Some(prev) = last[s] {
                        if v > prev {
                            let (gl, hl) = acc[s];
                            let (g, h) = totals[open[s]];
                            let gain = split_gain(gl, hl, g - gl, h - hl, lambda);
                            if best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: split_point(prev, v),
                                });
                            }
                        }
                    }
                    acc[s].0 += grad[i];
                    acc[s].1 += hess[i];
                    last[s] = Some(v);
                }
                best
            })
            .collect();

        // Features are reduced in index order so ties keep the lower index.
        let mut chosen: Vec<Option<Candidate>> = vec![None; open.len()];
        for best in &per_feature {
            for (s, c) in best.iter().enumerate() {
                if let Some(c) = c {
                    if c.gain > 0.0 && chosen[s].is_none_or(|b| c.gain > b.gain) {
                        chosen[s] = Some(*c);
                    }
                }
            }
        }

        let mut next_open = Vec::new();
        let mut child_of: Vec<Option<(usize, usize, usize, f64)>> = vec![None; open.len()];
        for (s, c) in chosen.iter().enumerate() {
            if let Some(c) = c {
                let left = nodes.len();
                nodes.push(TreeNode::Leaf { weight: 0.0 });
                nodes.push(TreeNode::Leaf { weight: 0.0 });
                totals.push((0.0, 0.0));
                totals.push((0.0, 0.0));
                nodes[open[s]] = TreeNode::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right: left + 1,
                };
                child_of[s] = Some((left, left + 1, c.feature, c.threshold));
                next_open.push(left);
                next_open.push(left + 1);
            }
        }
        for i in 0..n {
            let node = node_of[i] as usize;
            let s = if node < slot_of.len() { slot_of[node] } else { usize::MAX };
            if s == usize::MAX {
                continue;
            }
            if let Some((l, r, f, t)) = child_of[s] {
                let child = if values[i * d + f] <= t { l } else { r };
                node_of[i] = child as u32;
                totals[child].0 += grad[i];
                totals[child].1 += hess[i];
            }
        }
        open = next_open;
    }

    for (node, &(g, h)) in totals.iter().enumerate() {
        if let TreeNode::Leaf { weight } = &mut nodes[node] {
            *weight = leaf_weight(g, h, lambda);
        }
    }
    (RegressionTree { nodes }, node_of)
}

impl GbdtModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    /// Probability of the anomalous class for every row.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<f64> {
        let rows: Vec<&[f64]> = x.rows().collect();
        rows.par_iter().map(|r| sigmoid(self.margin(r))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn params(rounds: usize) -> GbdtParams {
        GbdtParams {
            learning_rate: 0.1,
            max_depth: 6,
            n_rounds: rounds,
            lambda: 1.0,
        }
    }

    fn blobs(seed: u64, n: usize) -> (FeatureMatrix, Vec<u8>) {
        let mut rng = SplitMix64::new(seed);
        let mut values = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let l = u8::from(i % 2 == 1);
            let c = if l == 1 { 3.0 } else { -3.0 };
            values.push(c + rng.gaussian());
            values.push(c + rng.gaussian());
            y.push(l);
        }
        (FeatureMatrix::new(vec!["a".into(), "b".into()], n, values).unwrap(), y)
    }

    #[test]
    fn leaf_weight_example() {
        assert!((leaf_weight(-0.5, 0.25, 1.0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn gain_sign() {
        // separating: gradients of opposite sign on each side
        assert!(split_gain(-2.0, 1.0, 2.0, 1.0, 1.0) > 0.0);
        // identical halves gain nothing
        assert!(split_gain(1.0, 1.0, 1.0, 1.0, 1.0) <= 0.0);
    }

    #[test]
    fn constant_feature_yields_single_leaf() {
        let x = FeatureMatrix::new(vec!["c".into()], 4, vec![1.0; 4]).unwrap();
        let m = gbdt_fit(&x, &[0, 1, 0, 1], &params(3)).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn zero_trees_predict_prior() {
        let (x, y) = blobs(1, 100);
        let m = gbdt_fit(&x, &y, &params(0)).unwrap();
        let p = m.predict_proba(&x);
        assert!(p.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = blobs(2, 2000);
        let m = gbdt_fit(&x, &y, &params(100)).unwrap();
        let p = m.predict_proba(&x);
        let correct = p.iter().zip(&y).filter(|(&p, &l)| u8::from(p >= 0.5) == l).count();
        assert!(correct as f64 / 2000.0 >= 0.99);
        assert!(m.trees.iter().all(|t| t.depth() <= 6));
        assert!(m.training_loss.windows(2).all(|w| w[1] <= w[0]));
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = blobs(3, 10);
        assert!(matches!(gbdt_fit(&x, &[0; 10], &params(1)), Err(Error::SingleClass)));
    }
}
