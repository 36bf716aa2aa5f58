use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six implemented detector families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gbdt,
    Knn,
    #[serde(rename = "isoforest")]
    IsoForest,
    Ocsvm,
    Autoencoder,
    Vae,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Gbdt,
        Family::Knn,
        Family::IsoForest,
        Family::Ocsvm,
        Family::Autoencoder,
        Family::Vae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gbdt => "gbdt",
            Family::Knn => "knn",
            Family::IsoForest => "isoforest",
            Family::Ocsvm => "ocsvm",
            Family::Autoencoder => "autoencoder",
            Family::Vae => "vae",
        }
    }

    /// Families that learn from labels.
    pub fn is_supervised(self) -> bool {
        matches!(self, Family::Gbdt | Family::Knn)
    }

    /// Families fitted on normal-labelled rows only.
    pub fn trains_on_normal_only(self) -> bool {
        matches!(self, Family::Ocsvm | Family::Autoencoder | Family::Vae)
    }

    /// Neural families consume min-max scaled inputs; the rest standard-scaled.
    pub fn uses_minmax(self) -> bool {
        matches!(self, Family::Autoencoder | Family::Vae)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let family = match lower.as_str() {
            "gbdt" | "xgboost" => Family::Gbdt,
            "knn" => Family::Knn,
            "isoforest" | "isolation_forest" | "iforest" => Family::IsoForest,
            "ocsvm" | "oc-svm" | "one_class_svm" => Family::Ocsvm,
            "autoencoder" | "ae" => Family::Autoencoder,
            "vae" => Family::Vae,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown detector family `{s}`"
                )))
            }
        };
        Ok(family)
    }
}

/// Hyperparameter presets: `Table3` for the device task, `Table4` for the
/// cyber task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Table3,
    Table4,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table3" | "device" => Ok(Preset::Table3),
            "table4" | "cyber" => Ok(Preset::Table4),
            _ => Err(Error::InvalidArgument(format!("unknown preset `{s}`"))),
        }
    }
}

/// Declarative hyperparameter bundle for one detector.
///
/// Only the fields relevant to `family` are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSpec {
    pub family: Family,
    /// Boosting shrinkage for GBDT; optimiser step for the neural families.
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_rounds: usize,
    /// L2 leaf regulariser for GBDT.
    pub lambda: f64,
    pub k: usize,
    pub distance: String,
    pub contamination: f64,
    pub n_trees: usize,
    pub subsample_size: usize,
    pub nu: f64,
    /// RBF width; `None` selects `1 / (n_features * var(X))`.
    pub gamma: Option<f64>,
    pub latent_dim: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub threshold_percentile: f64,
    pub seed: u64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self::preset(Family::Gbdt, Preset::Table3)
    }
}

impl DetectorSpec {
    pub fn preset(family: Family, preset: Preset) -> Self {
        let device = preset == Preset::Table3;
        let neural = matches!(family, Family::Autoencoder | Family::Vae);
        Self {
            family,
            learning_rate: if neural { 0.01 } else { 0.1 },
            max_depth: 6,
            n_rounds: 100,
            lambda: 1.0,
            k: 5,
            distance: "euclidean".into(),
            contamination: if device { 0.2 } else { 0.1 },
            n_trees: 100,
            subsample_size: 256,
            nu: if device { 0.2 } else { 0.1 },
            gamma: if device { None } else { Some(0.1) },
            latent_dim: if device { 2 } else { 10 },
            hidden_width: 16,
            epochs: if device { 100 } else { 200 },
            batch_size: 32,
            threshold_percentile: 80.0,
            seed: 0,
        }
    }

    pub fn presets(preset: Preset) -> Vec<Self> {
        Family::ALL
            .iter()
            .map(|&f| Self::preset(f, preset))
            .collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks the fields this family reads.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.family)));
        match self.family {
            Family::Gbdt => {
                if !(self.learning_rate > 0.0) {
                    return bad(format!("learning_rate {} must be positive", self.learning_rate));
                }
                if self.max_depth == 0 {
                    return bad("max_depth must be at least 1".into());
                }
                if self.lambda < 0.0 {
                    return bad("lambda must be non-negative".into());
                }
            }
            Family::Knn => {
                if self.k == 0 {
                    return bad("k must be at least 1".into());
                }
                if !self.distance.eq_ignore_ascii_case("euclidean") {
                    return bad(format!("unsupported distance `{}`", self.distance));
                }
            }
            Family::IsoForest => {
                if !(self.contamination > 0.0 && self.contamination <= 0.5) {
                    return bad(format!("contamination {} outside (0, 0.5]", self.contamination));
                }
                if self.n_trees == 0 || self.subsample_size == 0 {
                    return bad("n_trees and subsample_size must be positive".into());
                }
            }
            Family::Ocsvm => {
                if !(self.nu > 0.0 && self.nu <= 1.0) {
                    return bad(format!("nu {} outside (0, 1]", self.nu));
                }
                if let Some(g) = self.gamma {
                    if !(g > 0.0) {
                        return bad(format!("gamma {g} must be positive"));
                    }
                }
            }
            Family::Autoencoder | Family::Vae => {
                if self.latent_dim == 0 || self.hidden_width == 0 {
                    return bad("latent_dim and hidden_width must be positive".into());
                }
                if self.batch_size == 0 {
                    return bad("batch_size must be positive".into());
                }
                if !(self.learning_rate > 0.0) {
                    return bad(format!("learning_rate {} must be positive", self.learning_rate));
                }
                if !(self.threshold_percentile > 0.0 && self.threshold_percentile < 100.0) {
                    return bad(format!(
                        "threshold_percentile {} outside (0, 100)",
                        self.threshold_percentile
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_mirror_hyperparameter_tables() {
        let g = DetectorSpec::preset(Family::Gbdt, Preset::Table3);
        assert_eq!((g.learning_rate, g.max_depth), (0.1, 6));
        let k = DetectorSpec::preset(Family::Knn, Preset::Table4);
        assert_eq!(k.k, 5);
        let v3 = DetectorSpec::preset(Family::Vae, Preset::Table3);
        assert_eq!((v3.latent_dim, v3.epochs, v3.batch_size), (2, 100, 32));
        let v4 = DetectorSpec::preset(Family::Vae, Preset::Table4);
        assert_eq!((v4.latent_dim, v4.epochs), (10, 200));
        let o3 = DetectorSpec::preset(Family::Ocsvm, Preset::Table3);
        assert_eq!((o3.nu, o3.gamma), (0.2, None));
        let o4 = DetectorSpec::preset(Family::Ocsvm, Preset::Table4);
        assert_eq!((o4.nu, o4.gamma), (0.1, Some(0.1)));
        assert_eq!(DetectorSpec::preset(Family::IsoForest, Preset::Table3).contamination, 0.2);
        assert_eq!(DetectorSpec::preset(Family::IsoForest, Preset::Table4).contamination, 0.1);
    }

    #[test]
    fn irrelevant_fields_are_ignored_by_validation() {
        let mut s = DetectorSpec::preset(Family::Knn, Preset::Table3);
        s.nu = -4.0;
        s.contamination = 9.0;
        assert!(s.validate().is_ok());
        s.k = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn family_parsing() {
        assert_eq!("XGBoost".parse::<Family>().unwrap(), Family::Gbdt);
        assert_eq!("isoforest".parse::<Family>().unwrap(), Family::IsoForest);
        assert!("gan".parse::<Family>().is_err());
    }
}
