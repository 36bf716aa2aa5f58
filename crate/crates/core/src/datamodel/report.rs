use serde::{Deserialize, Serialize};

use super::Task;

pub const SCHEMA_VERSION: u32 = 1;

/// How train and evaluation rows relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Stratified 70/30 split; metrics on the held-out rows.
    HoldoutSplit,
    /// Fit on every labelled row; metrics on the same rows.
    FullTrain,
}

impl Protocol {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Device => Protocol::HoldoutSplit,
            Task::Cyber => Protocol::FullTrain,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::HoldoutSplit => "holdout_split",
            Protocol::FullTrain => "full_train",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed,
    NotImplemented,
}

impl RowStatus {
    pub fn name(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Failed => "failed",
            RowStatus::NotImplemented => "not_implemented",
        }
    }
}

/// One detector's results. Undefined metrics are `None` (JSON `null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub protocol: Protocol,
    pub status: RowStatus,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc_auc: Option<f64>,
    /// Median wall-clock seconds of the scoring phase.
    pub detect_seconds: Option<f64>,
    pub error: Option<String>,
}

impl ModelRow {
    pub fn placeholder(model: &str, protocol: Protocol, status: RowStatus) -> Self {
        Self {
            model: model.to_string(),
            protocol,
            status,
            accuracy: None,
            precision: None,
            recall: None,
            f1: None,
            roc_auc: None,
            detect_seconds: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    /// `synthetic` or the input path.
    pub source: String,
    pub n_rows: usize,
    pub n_anomalies: usize,
    pub n_train: usize,
    pub n_eval: usize,
    /// Columns fed to the detectors, after selection.
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub task: Task,
    pub protocol: Protocol,
    pub dataset: DatasetDescriptor,
    pub seed: u64,
    /// Echo of the configuration that produced the report.
    pub config: serde_json::Value,
    pub models: Vec<ModelRow>,
}
