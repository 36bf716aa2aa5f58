use serde::{Deserialize, Serialize};

use super::{check_labels, FeatureScoreTable, Method};
use crate::datamodel::FeatureMatrix;
use crate::error::{Error, Result};
use crate::preprocess::standard_scale;

/// Base estimator settings: L2-regularised logistic regression fitted by
/// full-batch gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfeConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub step: f64,
    /// Fraction of the remaining features dropped per round (at least one).
    pub drop_fraction: f64,
}

impl Default for RfeConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            iterations: 500,
            step: 0.1,
            drop_fraction: 0.1,
        }
    }
}

/// Logistic-regression weights on the columns `cols` of row-major `x`.
/// The penalty gradient is `(lambda / n) * w`, matching a loss of mean
/// log-loss plus `lambda / (2n) * |w|^2`.
pub(crate) fn logistic_weights(
    x: &[f64],
    n_cols: usize,
    cols: &[usize],
    y: &[u8],
    cfg: &RfeConfig,
) -> Vec<f64> {
    let n = y.len();
    let d = cols.len();
    let mut sub = Vec::with_capacity(n * d);
    for i in 0..n {
        sub.extend(cols.iter().map(|&c| x[i * n_cols + c]));
    }
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    let inv_n = 1.0 / n as f64;
    for _ in 0..cfg.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (row, &label) in sub.chunks_exact(d).zip(y) {
            let z = b + row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let r = 1.0 / (1.0 + (-z).exp()) - f64::from(label);
            grad_b += r;
            for (g, v) in grad.iter_mut().zip(row) {
                *g += r * v;
            }
        }
        for (wj, g) in w.iter_mut().zip(&grad) {
            *wj -= cfg.step * (g * inv_n + cfg.lambda * inv_n * *wj);
        }
        b -= cfg.step * grad_b * inv_n;
    }
    w
}

/// Recursive feature elimination down to `k_target` features. The score of
/// a feature is the round in which it was dropped; survivors share the
/// highest score and are marked selected.
pub fn rfe_select(
    x: &FeatureMatrix,
    y: &[u8],
    k_target: usize,
    cfg: &RfeConfig,
) -> Result<FeatureScoreTable> {
    check_labels(x, y)?;
    let n_features = x.n_cols();
    if k_target == 0 || k_target > n_features {
        return Err(Error::InvalidArgument(format!(
            "k_target {k_target} must be in 1..={n_features}"
        )));
    }
    let (scaled, _) = standard_scale(x, None)?;
    let mut remaining: Vec<usize> = (0..n_features).collect();
    let mut dropped_in = vec![0usize; n_features];
    let mut round = 0;
    while remaining.len() > k_target {
        round += 1;
        let w = logistic_weights(scaled.values(), n_features, &remaining, y, cfg);
        let want = ((cfg.drop_fraction * remaining.len() as f64).ceil() as usize).max(1);
        let n_drop = want.min(remaining.len() - k_target);
        // Weakest first; among equal weights the later column goes first.
        let mut order: Vec<usize> = (0..remaining.len()).collect();
        order.sort_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(b.cmp(&a)));
        let drop: Vec<usize> = order[..n_drop].iter().map(|&i| remaining[i]).collect();
        for &f in &drop {
            dropped_in[f] = round;
        }
        remaining.retain(|f| !drop.contains(f));
    }
    let mut table = FeatureScoreTable::new(
        Method::RfeRank,
        x.column_names().to_vec(),
        dropped_in
            .iter()
            .map(|&r| if r == 0 { (round + 1) as f64 } else { r as f64 })
            .collect(),
    );
    for f in remaining {
        table.selected[f] = true;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn noisy_with_signal(seed: u64, n: usize) -> (FeatureMatrix, Vec<u8>) {
        let mut rng = SplitMix64::new(seed);
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.5))).collect();
        let mut cols = Vec::new();
        for j in 0..10 {
            let v: Vec<Option<f64>> = y
                .iter()
                .map(|&l| Some(if j == 4 { f64::from(l) + 0.1 * rng.gaussian() } else { rng.gaussian() }))
                .collect();
            cols.push((format!("f{j}"), v));
        }
        (FeatureMatrix::from_columns(cols).unwrap(), y)
    }

    #[test]
    fn identity_when_target_is_all_features() {
        let (m, y) = noisy_with_signal(1, 200);
        let t = rfe_select(&m, &y, 10, &RfeConfig::default()).unwrap();
        assert!(t.selected.iter().all(|&s| s));
        assert!(t.scores.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn predictive_feature_survives() {
        let (m, y) = noisy_with_signal(2, 300);
        let t = rfe_select(&m, &y, 1, &RfeConfig::default()).unwrap();
        assert_eq!(t.selected.iter().position(|&s| s), Some(4));
        assert_eq!(t.scores.iter().cloned().fold(0.0, f64::max), t.scores[4]);
    }

    #[test]
    fn invalid_targets_are_rejected() {
        let (m, y) = noisy_with_signal(3, 50);
        assert!(rfe_select(&m, &y, 11, &RfeConfig::default()).is_err());
        assert!(rfe_select(&m, &y, 0, &RfeConfig::default()).is_err());
    }
}
