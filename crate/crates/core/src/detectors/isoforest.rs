//! Isolation forest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const EULER_GAMMA: f64 = 0.5772156649;

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` nodes; normalises isolation depths.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsoNode {
    /// Rows with `x[feature] < value` go left.
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoTree {
    pub nodes: Vec<IsoNode>,
}

impl IsoTree {
    /// Depth at which `row` leaves the tree plus the expected remaining depth
    /// of its external node.
    pub fn path_length(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        let mut depth = 0.0;
        loop {
            match &self.nodes[at] {
                IsoNode::Leaf { size } => return depth + average_path_length(*size),
                IsoNode::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    at = if row[*feature] < *value { *left } else { *right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoForestModel {
    pub trees: Vec<IsoTree>,
    /// Subsample size actually used (clipped to the training size).
    pub subsample_size: usize,
    pub height_limit: usize,
    pub contamination: f64,
}

pub struct IsoForestParams {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub contamination: f64,
    pub seed: u64,
}

pub fn isoforest_fit(x: &FeatureMatrix, params: &IsoForestParams) -> Result<IsoForestModel> {
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "isolation forest needs at least 2 training rows".into(),
        ));
    }
    if params.n_trees == 0 || params.subsample_size < 2 {
        return Err(Error::Config(
            "isolation forest needs n_trees >= 1 and subsample_size >= 2".into(),
        ));
    }
    let psi = params.subsample_size.min(n);
    let height_limit = (psi as f64).log2().ceil() as usize;
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = SplitMix64::new(SplitMix64::derive_seed(params.seed, t as u64));
            let rows = rng.sample_indices(n, psi);
            let mut nodes = Vec::new();
            grow(x, rows, 0, height_limit, &mut rng, &mut nodes);
            IsoTree { nodes }
        })
        .collect();
    Ok(IsoForestModel {
        trees,
        subsample_size: psi,
        height_limit,
        contamination: params.contamination,
    })
}

fn grow(
    x: &FeatureMatrix,
    rows: Vec<usize>,
    depth: usize,
    limit: usize,
    rng: &mut SplitMix64,
    nodes: &mut Vec<IsoNode>,
) -> usize {
    let id = nodes.len();
    nodes.push(IsoNode::Leaf { size: rows.len() });
    if depth >= limit || rows.len() <= 1 {
        return id;
    }
    let d = x.n_cols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for &i in &rows {
        for (j, &v) in x.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let candidates: Vec<usize> = (0..d).filter(|&j| hi[j] > lo[j]).collect();
    if candidates.is_empty() {
        return id;
    }
    let feature = candidates[rng.index(candidates.len())];
    let (min, max) = (lo[feature], hi[feature]);
    let mut value = max - rng.next_f64() * (max - min);
    if value <= min {
        value = max;
    }
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&i| x.get(i, feature) < value);
    let left = grow(x, left_rows, depth + 1, limit, rng, nodes);
    let right = grow(x, right_rows, depth + 1, limit, rng, nodes);
    nodes[id] = IsoNode::Split {
        feature,
        value,
        left,
        right,
    };
    id
}

impl IsoForestModel {
    pub fn mean_path_length(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// `2^(-E[h(x)] / c(psi))` for every row; higher is more anomalous.
    pub fn score(&self, x: &FeatureMatrix) -> Vec<f64> {
        let norm = average_path_length(self.subsample_size);
        let rows: Vec<&[f64]> = x.rows().collect();
        rows.par_iter()
            .map(|r| score_from_path(self.mean_path_length(r), norm))
            .collect()
    }
}

pub fn score_from_path(mean_path: f64, norm: f64) -> f64 {
    2f64.powf(-mean_path / norm)
}
