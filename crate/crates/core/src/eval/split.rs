use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    /// Ascending row indices.
    pub train: Vec<usize>,
    /// Ascending row indices.
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Per class, shuffles the row indices and keeps `round(train_frac * n_c)`
/// for training.
pub fn stratified_split(y: &[u8], train_frac: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_frac} outside (0, 1)"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if rows.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} rows; a stratified split needs at least 2",
                rows.len()
            )));
        }
        rng.shuffle(&mut rows);
        let k = (train_frac * rows.len() as f64).round() as usize;
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}
