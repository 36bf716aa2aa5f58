//! End-to-end benchmark of a set of detectors on one dataset.

use std::time::{Duration, Instant};

use crate::datamodel::{
    DatasetDescriptor, DetectorSpec, EvalReport, Family, FeatureMatrix, ModelRow, Protocol,
    RowStatus, Task, SCHEMA_VERSION,
};
use crate::detectors::{quota_flags, threshold_flags, TrainedModel};
use crate::error::{Error, Result};
use crate::featsel::{select_features, Selection, SelectionConfig};
use crate::preprocess::{Dataset, FeatureConfig, Preprocessor};

use super::metrics::{confusion_metrics, roc_auc};
use super::split::{stratified_split, SplitIndices};

/// Named model families without an implementation; reported as `not_implemented`.
pub const RESERVED_MODELS: [&str; 3] = ["gan", "gnn", "lstm_autoencoder"];

/// Fraction of rows used for training under the hold-out protocol.
pub const TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Split,
    Preprocess,
    Select,
    Fit,
    Prepare,
    /// One measured scoring repeat.
    TimedScore,
    Evaluate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseEvent {
    pub phase: Phase,
    pub stage: Stage,
    pub model: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub features: FeatureConfig,
    pub selection: SelectionConfig,
    pub specs: Vec<DetectorSpec>,
    pub seed: u64,
    /// Scoring repeats; the median duration is reported.
    pub timing_repeats: usize,
    /// Dataset source recorded in the report.
    pub source: String,
    /// Configuration echoed into the report.
    pub config: serde_json::Value,
}

impl BenchOptions {
    pub fn new(specs: Vec<DetectorSpec>, seed: u64) -> Self {
        Self {
            features: FeatureConfig::default(),
            selection: SelectionConfig::default(),
            specs,
            seed,
            timing_repeats: 5,
            source: "synthetic".into(),
            config: serde_json::Value::Null,
        }
    }
}

pub struct BenchOutcome {
    pub report: EvalReport,
    /// Fitted models in spec order; `None` where fitting failed.
    pub models: Vec<Option<TrainedModel>>,
    pub preprocessor: Preprocessor,
    pub selection: Selection,
    pub split: Option<SplitIndices>,
}

fn median(mut d: Vec<Duration>) -> Duration {
    d.sort();
    d[d.len() / 2]
}

/// Flags used for benchmark metrics. The isolation forest flags a fixed
/// quota of the evaluated rows and the autoencoders flag above the
/// percentile of the evaluated scores; the others use the stored threshold.
pub fn benchmark_flags(model: &TrainedModel, scores: &[f64]) -> Result<Vec<u8>> {
    match model.family() {
        Family::IsoForest => quota_flags(scores, model.spec.contamination),
        Family::Autoencoder | Family::Vae => {
            Ok(threshold_flags(scores, model.spec.threshold_percentile)?.1)
        }
        _ => Ok(model.flag(scores)),
    }
}

struct Evaluated {
    row: ModelRow,
    model: TrainedModel,
}

fn evaluate_one(
    spec: &DetectorSpec,
    x_train: &FeatureMatrix,
    y_train: &[u8],
    x_eval: &FeatureMatrix,
    y_eval: &[u8],
    protocol: Protocol,
    repeats: usize,
    emit: &mut dyn FnMut(PhaseEvent),
) -> Result<Evaluated> {
    let name = spec.family.name().to_string();
    let ev = |phase, stage| PhaseEvent {
        phase,
        stage,
        model: Some(name.clone()),
    };
    emit(ev(Phase::Fit, Stage::Start));
    let model = TrainedModel::fit(spec, x_train, y_train)?;
    emit(ev(Phase::Fit, Stage::End));

    emit(ev(Phase::Prepare, Stage::Start));
    let prepared = model.prepare(x_eval)?;
    emit(ev(Phase::Prepare, Stage::End));

    let mut durations = Vec::with_capacity(repeats);
    let mut scores = Vec::new();
    for _ in 0..repeats.max(1) {
        emit(ev(Phase::TimedScore, Stage::Start));
        let start = Instant::now();
        let s = model.score_prepared(&prepared)?;
        let elapsed = start.elapsed();
        emit(ev(Phase::TimedScore, Stage::End));
        durations.push(elapsed);
        scores = s;
    }

    emit(ev(Phase::Evaluate, Stage::Start));
    let flags = benchmark_flags(&model, &scores)?;
    let m = confusion_metrics(y_eval, &flags)?;
    let auc = match roc_auc(y_eval, &scores) {
        Ok(a) => Some(a),
        Err(Error::SingleClass) => None,
        Err(e) => return Err(e),
    };
    emit(ev(Phase::Evaluate, Stage::End));

    let seconds = median(durations).as_secs_f64().max(1e-9);
    Ok(Evaluated {
        row: ModelRow {
            model: name,
            protocol,
            status: RowStatus::Ok,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            roc_auc: auc,
            detect_seconds: Some(seconds),
            error: None,
        },
        model,
    })
}

/// Runs the task's protocol: a stratified 70/30 split for device data, fit
/// and evaluate on every row for network data. Preprocessing and feature
/// selection are fitted on the training rows. A detector that fails yields
/// a `failed` row; the others still run.
pub fn run_benchmark(
    data: &Dataset,
    opts: &BenchOptions,
    emit: &mut dyn FnMut(PhaseEvent),
) -> Result<BenchOutcome> {
    let task = data.task();
    let protocol = Protocol::for_task(task);
    let y = data.labels();
    let ev = |phase, stage| PhaseEvent {
        phase,
        stage,
        model: None,
    };

    emit(ev(Phase::Split, Stage::Start));
    let (train, eval, split) = match protocol {
        Protocol::HoldoutSplit => {
            let s = stratified_split(&y, TRAIN_FRACTION, opts.seed)?;
            (s.train.clone(), s.test.clone(), Some(s))
        }
        Protocol::FullTrain => {
            let all: Vec<usize> = (0..y.len()).collect();
            (all.clone(), all, None)
        }
    };
    emit(ev(Phase::Split, Stage::End));

    emit(ev(Phase::Preprocess, Stage::Start));
    let pre = Preprocessor::fit(data, &train, &opts.features)?;
    let full = pre.transform(data)?;
    emit(ev(Phase::Preprocess, Stage::End));

    let y_train: Vec<u8> = train.iter().map(|&i| y[i]).collect();
    let y_eval: Vec<u8> = eval.iter().map(|&i| y[i]).collect();

    emit(ev(Phase::Select, Stage::Start));
    let x_train_all = full.select_rows(&train);
    let selection = select_features(&x_train_all, &y_train, task, &opts.selection)?;
    let x_train = x_train_all.select_columns(&selection.features)?;
    let x_eval = full.select_rows(&eval).select_columns(&selection.features)?;
    emit(ev(Phase::Select, Stage::End));

    let mut rows = Vec::new();
    let mut models = Vec::new();
    for spec in &opts.specs {
        match evaluate_one(
            spec,
            &x_train,
            &y_train,
            &x_eval,
            &y_eval,
            protocol,
            opts.timing_repeats,
            emit,
        ) {
            Ok(e) => {
                rows.push(e.row);
                models.push(Some(e.model));
            }
            Err(e) => {
                let mut row = ModelRow::placeholder(spec.family.name(), protocol, RowStatus::Failed);
                row.error = Some(e.to_string());
                rows.push(row);
                models.push(None);
            }
        }
    }
    for name in RESERVED_MODELS {
        rows.push(ModelRow::placeholder(name, protocol, RowStatus::NotImplemented));
    }

    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        task,
        protocol,
        dataset: DatasetDescriptor {
            source: opts.source.clone(),
            n_rows: y.len(),
            n_anomalies: y.iter().filter(|&&l| l == 1).count(),
            n_train: train.len(),
            n_eval: eval.len(),
            features: selection.features.clone(),
        },
        seed: opts.seed,
        config: opts.config.clone(),
        models: rows,
    };
    Ok(BenchOutcome {
        report,
        models,
        preprocessor: pre,
        selection,
        split,
    })
}

/// True when the task name matches the dataset.
pub fn check_task(task: Task, data: &Dataset) -> Result<()> {
    if task != data.task() {
        return Err(Error::Config(format!(
            "task `{task}` does not match {} data",
            data.task()
        )));
    }
    Ok(())
}
