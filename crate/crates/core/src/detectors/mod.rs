//! The six detector families behind one fit / score / flag contract:
//! higher scores are more anomalous.
//!
//! [`TrainedModel`] bundles a fitted detector with the scaler statistics of
//! its training rows and a score threshold, and serialises to versioned JSON.

pub mod gbdt;
pub mod isoforest;
mod kdtree;
pub mod knn;
pub mod neural;
pub mod ocsvm;
pub mod threshold;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{DetectorSpec, Family, FeatureMatrix};
use crate::error::{Error, Result};
use crate::preprocess::{minmax_scale, standard_scale, ScalerStats};

pub use gbdt::{gbdt_fit, GbdtModel, GbdtParams};
pub use isoforest::{average_path_length, isoforest_fit, IsoForestModel, IsoForestParams};
pub use knn::{knn_fit, KnnModel};
pub use neural::{kl_divergence, neural_fit, NeuralNetModel, NeuralParams};
pub use ocsvm::{ocsvm_fit, OcsvmModel};
pub use threshold::{nearest_rank, quota_flags, threshold_flags};

/// Version written into saved model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelParams {
    Gbdt(GbdtModel),
    Knn(KnnModel),
    IsoForest(IsoForestModel),
    Ocsvm(OcsvmModel),
    Neural(NeuralNetModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    Standard,
    MinMax,
}

/// How a score is compared with the stored threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagRule {
    /// `score > threshold`
    Above,
    /// `score >= threshold`
    AtLeast,
}

impl FlagRule {
    pub fn apply(self, score: f64, threshold: f64) -> bool {
        match self {
            FlagRule::Above => score > threshold,
            FlagRule::AtLeast => score >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: DetectorSpec,
    /// Input columns, in order.
    pub columns: Vec<String>,
    pub scaler_kind: ScalerKind,
    pub scaler: ScalerStats,
    pub params: ModelParams,
    pub threshold: f64,
    pub rule: FlagRule,
}

impl TrainedModel {
    /// Fits `spec` on unscaled training rows `x` with labels `y`. Scaling
    /// statistics come from all of `x`; families that learn normal
    /// behaviour only are then fitted on the rows labelled 0.
    pub fn fit(spec: &DetectorSpec, x: &FeatureMatrix, y: &[u8]) -> Result<Self> {
        Ok(Self::fit_with_flags(spec, x, y)?.0)
    }

    /// As [`TrainedModel::fit`], also returning the flags assigned to the
    /// fitting rows at fit time.
    pub fn fit_with_flags(
        spec: &DetectorSpec,
        x: &FeatureMatrix,
        y: &[u8],
    ) -> Result<(Self, Vec<u8>)> {
        spec.validate()?;
        if y.len() != x.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} rows",
                y.len(),
                x.n_rows()
            )));
        }
        if x.has_missing() {
            return Err(Error::InvalidArgument(
                "detectors need an imputed matrix without missing cells".into(),
            ));
        }
        let scaler_kind = if spec.family.uses_minmax() {
            ScalerKind::MinMax
        } else {
            ScalerKind::Standard
        };
        let (scaled, scaler) = match scaler_kind {
            ScalerKind::Standard => standard_scale(x, None)?,
            ScalerKind::MinMax => minmax_scale(x, None)?,
        };
        let (fit_x, fit_y) = if spec.family.trains_on_normal_only() {
            let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0).collect();
            if rows.is_empty() {
                return Err(Error::SingleClass);
            }
            (scaled.select_rows(&rows), vec![0; rows.len()])
        } else {
            (scaled, y.to_vec())
        };

        let (params, scores, threshold, rule) = match spec.family {
            Family::Gbdt => {
                let m = gbdt_fit(
                    &fit_x,
                    &fit_y,
                    &GbdtParams {
                        learning_rate: spec.learning_rate,
                        max_depth: spec.max_depth,
                        n_rounds: spec.n_rounds,
                        lambda: spec.lambda,
                    },
                )?;
                let s = m.predict_proba(&fit_x);
                (ModelParams::Gbdt(m), s, 0.5, FlagRule::AtLeast)
            }
            Family::Knn => {
                let m = knn_fit(&fit_x, &fit_y, spec.k)?;
                let s = m.score(&fit_x)?;
                (ModelParams::Knn(m), s, 0.5, FlagRule::AtLeast)
            }
            Family::IsoForest => {
                let m = isoforest_fit(
                    &fit_x,
                    &IsoForestParams {
                        n_trees: spec.n_trees,
                        subsample_size: spec.subsample_size,
                        contamination: spec.contamination,
                        seed: spec.seed,
                    },
                )?;
                let s = m.score(&fit_x);
                let flags = quota_flags(&s, spec.contamination)?;
                // Lowest flagged score; scores are below 1, so 1 flags nothing.
                let t = s
                    .iter()
                    .zip(&flags)
                    .filter(|(_, &f)| f == 1)
                    .map(|(&s, _)| s)
                    .fold(1.0, f64::min);
                (ModelParams::IsoForest(m), s, t, FlagRule::AtLeast)
            }
            Family::Ocsvm => {
                let m = ocsvm_fit(&fit_x, spec.nu, spec.gamma)?;
                let s = m.score(&fit_x)?;
                (ModelParams::Ocsvm(m), s, 0.0, FlagRule::Above)
            }
            Family::Autoencoder | Family::Vae => {
                let m = neural_fit(
                    &fit_x,
                    &NeuralParams {
                        variational: spec.family == Family::Vae,
                        hidden: spec.hidden_width,
                        latent: spec.latent_dim,
                        epochs: spec.epochs,
                        batch_size: spec.batch_size,
                        learning_rate: spec.learning_rate,
                        seed: spec.seed,
                    },
                )?;
                let s = m.reconstruction_error(&fit_x)?;
                let t = nearest_rank(&s, spec.threshold_percentile)?;
                (ModelParams::Neural(m), s, t, FlagRule::Above)
            }
        };
        let flags = scores.iter().map(|&s| u8::from(rule.apply(s, threshold))).collect();
        Ok((
            Self {
                format_version: MODEL_FORMAT_VERSION,
                spec: spec.clone(),
                columns: x.column_names().to_vec(),
                scaler_kind,
                scaler,
                params,
                threshold,
                rule,
            },
            flags,
        ))
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// Selects this model's columns from `x` and applies its scaler.
    pub fn prepare(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let x = if x.column_names() == self.columns.as_slice() {
            x.clone()
        } else {
            x.select_columns(&self.columns)?
        };
        if x.has_missing() {
            return Err(Error::InvalidArgument(
                "detectors need an imputed matrix without missing cells".into(),
            ));
        }
        Ok(match self.scaler_kind {
            ScalerKind::Standard => standard_scale(&x, Some(&self.scaler))?.0,
            ScalerKind::MinMax => minmax_scale(&x, Some(&self.scaler))?.0,
        })
    }

    /// Scores rows already passed through [`TrainedModel::prepare`].
    pub fn score_prepared(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        match &self.params {
            ModelParams::Gbdt(m) => Ok(m.predict_proba(x)),
            ModelParams::Knn(m) => m.score(x),
            ModelParams::IsoForest(m) => Ok(m.score(x)),
            ModelParams::Ocsvm(m) => m.score(x),
            ModelParams::Neural(m) => m.reconstruction_error(x),
        }
    }

    pub fn score(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.score_prepared(&self.prepare(x)?)
    }

    /// Flags from the stored threshold.
    pub fn flag(&self, scores: &[f64]) -> Vec<u8> {
        scores
            .iter()
            .map(|&s| u8::from(self.rule.apply(s, self.threshold)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let version = probe.get("format_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(MODEL_FORMAT_VERSION)) {
            return Err(Error::Config(format!(
                "unsupported model format version {version:?} (expected {MODEL_FORMAT_VERSION})"
            )));
        }
        Ok(serde_json::from_value(probe)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
