//! k-nearest-neighbour vote with exact Euclidean search.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use crate::datamodel::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_cols: usize,
    /// Training rows, row-major.
    pub points: Vec<f64>,
    pub labels: Vec<u8>,
    #[serde(skip)]
    tree: OnceLock<KdTree>,
}

impl PartialEq for KnnModel {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
            && self.n_cols == other.n_cols
            && self.points == other.points
            && self.labels == other.labels
    }
}

pub fn knn_fit(x: &FeatureMatrix, y: &[u8], k: usize) -> Result<KnnModel> {
    if y.len() != x.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if k == 0 || k > x.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={} (training rows)",
            x.n_rows()
        )));
    }
    let model = KnnModel {
        k,
        n_cols: x.n_cols(),
        points: x.values().to_vec(),
        labels: y.to_vec(),
        tree: OnceLock::new(),
    };
    model.tree();
    Ok(model)
}

impl KnnModel {
    fn tree(&self) -> &KdTree {
        self.tree.get_or_init(|| KdTree::build(&self.points, self.n_cols))
    }

    /// Training rows nearest to `q`, nearest first, ties to the lower row.
    pub fn neighbours(&self, q: &[f64]) -> Vec<usize> {
        self.tree()
            .nearest(q, self.k)
            .into_iter()
            .map(|(_, i)| i)
            .collect()
    }

    /// Fraction of anomalous labels among each query's `k` neighbours.
    pub fn score(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_cols {
            return Err(Error::InvalidArgument(format!(
                "expected {} columns, got {}",
                self.n_cols,
                x.n_cols()
            )));
        }
        let tree = self.tree();
        let rows: Vec<&[f64]> = x.rows().collect();
        Ok(rows
            .par_iter()
            .map(|q| {
                let hits = tree
                    .nearest(q, self.k)
                    .iter()
                    .filter(|(_, i)| self.labels[*i] == 1)
                    .count();
                hits as f64 / self.k as f64
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> FeatureMatrix {
        FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            rows.len(),
            rows.iter().flatten().copied().collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_query_returns_own_label() {
        let x = m(&[[0.0, 0.0], [5.0, 5.0], [9.0, 1.0]]);
        let model = knn_fit(&x, &[0, 1, 0], 1).unwrap();
        assert_eq!(model.score(&m(&[[5.0, 5.0]])).unwrap(), vec![1.0]);
    }

    #[test]
    fn vote_fraction() {
        let x = m(&[[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [0.3, 0.0], [0.4, 0.0], [50.0, 0.0]]);
        let model = knn_fit(&x, &[1, 1, 1, 0, 0, 0], 5).unwrap();
        assert_eq!(model.score(&m(&[[0.0, 0.0]])).unwrap(), vec![0.6]);
    }

    #[test]
    fn equidistant_neighbours_prefer_lower_index() {
        // query at the origin, two training points at distance 1
        let x = m(&[[1.0, 0.0], [-1.0, 0.0]]);
        let model = knn_fit(&x, &[1, 0], 1).unwrap();
        for _ in 0..3 {
            assert_eq!(model.neighbours(&[0.0, 0.0]), vec![0]);
            assert_eq!(model.score(&m(&[[0.0, 0.0]])).unwrap(), vec![1.0]);
        }
        let swapped = knn_fit(&m(&[[-1.0, 0.0], [1.0, 0.0]]), &[0, 1], 1).unwrap();
        assert_eq!(swapped.score(&m(&[[0.0, 0.0]])).unwrap(), vec![0.0]);
    }

    #[test]
    fn k_larger_than_training_set_fails_at_fit() {
        let x = m(&[[0.0, 0.0]]);
        assert!(knn_fit(&x, &[0], 2).is_err());
    }
}
