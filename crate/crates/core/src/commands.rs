//! Config-driven pipelines behind the command-line subcommands.
//!
//! Every command writes only under its output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datamodel::{DetectorSpec, EvalReport, Family, Preset, RowStatus, Task};
use crate::detectors::{TrainedModel, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, report_from_json, run_benchmark, stratified_split, BenchOptions,
    PhaseEvent, ReportFormat, TRAIN_FRACTION,
};
use crate::featsel::{select_features, write_score_csv, Selection, SelectionConfig};
use crate::ingest::{
    generate_attack_data, generate_device_data, parse_attack_csv, parse_device_csv,
    write_attack_csv, write_device_csv, GenConfig,
};
use crate::preprocess::{Dataset, FeatureConfig, Preprocessor};

pub const DEFAULT_LABEL_COLUMN: &str = "label";
pub const DEFAULT_OUTPUT_DIR: &str = "shield-out";

pub const DEVICE_CSV: &str = "device.csv";
pub const ATTACK_CSV: &str = "attack.csv";
pub const SCORE_TABLE_CSV: &str = "feature_scores.csv";
pub const FEATURE_LIST: &str = "selected_features.txt";
pub const PIPELINE_JSON: &str = "pipeline.json";
pub const SCORES_CSV: &str = "scores.csv";

fn default_label() -> String {
    DEFAULT_LABEL_COLUMN.into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(DEFAULT_OUTPUT_DIR)
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into(), "svg".into()]
}

/// One pipeline run, read from a JSON file and optionally patched by flags.
///
/// Exactly one of `inputs` and `generator` must be given. When generating,
/// the top-level `seed` replaces `generator.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub seed: Option<u64>,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub generator: Option<GenConfig>,
    #[serde(default = "default_label")]
    pub label_column: String,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    /// Defaults to `table3` for device data and `table4` for network data.
    #[serde(default)]
    pub preset: Option<Preset>,
    /// Field overrides keyed by family name, or `all`.
    #[serde(default)]
    pub overrides: BTreeMap<String, serde_json::Map<String, Value>>,
    /// Families to run; all six when absent.
    #[serde(default)]
    pub models: Option<Vec<String>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    #[serde(default)]
    pub timing_repeats: Option<usize>,
}

impl RunConfig {
    /// A config with defaults for everything except task and seed.
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            task,
            seed: Some(seed),
            inputs: Vec::new(),
            generator: None,
            label_column: default_label(),
            selection: SelectionConfig::default(),
            features: FeatureConfig::default(),
            preset: None,
            overrides: BTreeMap::new(),
            models: None,
            output_dir: default_output_dir(),
            formats: default_formats(),
            timing_repeats: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The mandatory seed.
    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("`seed` is required".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        match (self.inputs.is_empty(), &self.generator) {
            (true, None) => {
                return Err(Error::Config(
                    "one of `inputs` or `generator` is required".into(),
                ))
            }
            (false, Some(_)) => {
                return Err(Error::Config(
                    "`inputs` and `generator` are mutually exclusive".into(),
                ))
            }
            (true, Some(g)) => g.validate()?,
            (false, None) => {}
        }
        if self.label_column.trim().is_empty() {
            return Err(Error::Config("`label_column` must not be empty".into()));
        }
        self.report_formats()?;
        self.specs()?;
        Ok(())
    }

    pub fn preset(&self) -> Preset {
        self.preset.unwrap_or(match self.task {
            Task::Device => Preset::Table3,
            Task::Cyber => Preset::Table4,
        })
    }

    pub fn families(&self) -> Result<Vec<Family>> {
        let Some(names) = &self.models else {
            return Ok(Family::ALL.to_vec());
        };
        let mut families = Vec::new();
        for name in names {
            let f: Family = name
                .parse()
                .map_err(|e: Error| Error::Config(e.to_string()))?;
            if !families.contains(&f) {
                families.push(f);
            }
        }
        if families.is_empty() {
            return Err(Error::Config("`models` is empty".into()));
        }
        Ok(families)
    }

    pub fn report_formats(&self) -> Result<Vec<ReportFormat>> {
        self.formats.iter().map(|f| f.parse()).collect()
    }

    /// Preset specs for the selected families with overrides applied.
    pub fn specs(&self) -> Result<Vec<DetectorSpec>> {
        let seed = self.seed()?;
        for key in self.overrides.keys() {
            let known = key == "all" || Family::ALL.iter().any(|f| f.name() == key);
            if !known {
                return Err(Error::Config(format!(
                    "override key `{key}` is not `all` or a family name"
                )));
            }
        }
        let mut specs = Vec::new();
        for family in self.families()? {
            let base = DetectorSpec::preset(family, self.preset()).with_seed(seed);
            let mut value = serde_json::to_value(&base)?;
            let fields = value
                .as_object_mut()
                .expect("a spec serialises to an object");
            for key in ["all", family.name()] {
                let Some(patch) = self.overrides.get(key) else {
                    continue;
                };
                for (field, v) in patch {
                    if field == "family" || !fields.contains_key(field) {
                        return Err(Error::Config(format!(
                            "override `{key}.{field}` is not a detector parameter"
                        )));
                    }
                    fields.insert(field.clone(), v.clone());
                }
            }
            let spec: DetectorSpec = serde_json::from_value(value)
                .map_err(|e| Error::Config(format!("{family} overrides: {e}")))?;
            spec.validate()?;
            specs.push(spec);
        }
        Ok(specs)
    }

    /// Parses the inputs or runs the generator. Returns the data and a
    /// description of its source.
    pub fn load_dataset(&self) -> Result<(Dataset, String)> {
        let seed = self.seed()?;
        if let Some(g) = &self.generator {
            let g = GenConfig {
                seed,
                ..g.clone()
            };
            let data = match self.task {
                Task::Device => Dataset::Device(generate_device_data(&g)?),
                Task::Cyber => Dataset::Cyber(generate_attack_data(&g)?),
            };
            return Ok((data, "synthetic".into()));
        }
        let source = self
            .inputs
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(";");
        let data = match self.task {
            Task::Device => {
                let mut all = Vec::new();
                for p in &self.inputs {
                    all.extend(parse_device_csv(p, &self.label_column)?.records);
                }
                all.sort_by(|a, b| a.stream_order(b));
                Dataset::Device(all)
            }
            Task::Cyber => {
                let mut all = Vec::new();
                for p in &self.inputs {
                    all.extend(parse_attack_csv(p, &self.label_column)?.records);
                }
                Dataset::Cyber(all)
            }
        };
        if data.is_empty() {
            return Err(Error::Config("inputs contain no records".into()));
        }
        Ok((data, source))
    }

    /// The config as echoed into reports: the output location is omitted so
    /// reruns into another directory produce the same report.
    pub fn echo(&self) -> Value {
        let mut v = serde_json::to_value(self).unwrap_or(Value::Null);
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
        }
        v
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFile {
    pub path: PathBuf,
    pub rows: usize,
    pub anomalies: usize,
}

/// Reads a generator config: either a bare generator object or a run
/// config with a `generator` section.
pub fn load_gen_config(path: &Path) -> Result<GenConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let section = match value.get("generator") {
        Some(g) if value.get("task").is_some() => g.clone(),
        _ => value,
    };
    serde_json::from_value(section).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Writes `device.csv` and/or `attack.csv` under `out_dir`.
pub fn cmd_generate(
    tasks: &[Task],
    gen: &GenConfig,
    label_column: &str,
    out_dir: &Path,
) -> Result<Vec<GeneratedFile>> {
    gen.validate()?;
    create_dir(out_dir)?;
    let mut written = Vec::new();
    for &task in tasks {
        let (path, labels) = match task {
            Task::Device => {
                let records = generate_device_data(gen)?;
                let path = out_dir.join(DEVICE_CSV);
                write_device_csv(&path, &records, label_column)?;
                (path, records.iter().map(|r| r.label).collect::<Vec<_>>())
            }
            Task::Cyber => {
                let records = generate_attack_data(gen)?;
                let path = out_dir.join(ATTACK_CSV);
                write_attack_csv(&path, &records, label_column)?;
                (path, records.iter().map(|r| r.label).collect())
            }
        };
        written.push(GeneratedFile {
            path,
            rows: labels.len(),
            anomalies: labels.iter().filter(|&&l| l == 1).count(),
        });
    }
    Ok(written)
}

/// Rows used for fitting under the task's protocol.
fn training_rows(task: Task, y: &[u8], seed: u64) -> Result<Vec<usize>> {
    match task {
        Task::Device => Ok(stratified_split(y, TRAIN_FRACTION, seed)?.train),
        Task::Cyber => Ok((0..y.len()).collect()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectOutcome {
    pub selection: Selection,
    pub score_table: PathBuf,
    pub feature_list: PathBuf,
}

fn write_selection(selection: &Selection, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let table = dir.join(SCORE_TABLE_CSV);
    write_score_csv(&table, &selection.tables)?;
    let list = dir.join(FEATURE_LIST);
    let mut text = selection.features.join("\n");
    text.push('\n');
    write_file(&list, &text)?;
    Ok((table, list))
}

/// Runs the three selection methods on the training rows and writes the
/// score table and the integrated feature list.
pub fn cmd_select(cfg: &RunConfig) -> Result<SelectOutcome> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let (data, _) = cfg.load_dataset()?;
    let y = data.labels();
    let train = training_rows(cfg.task, &y, seed)?;
    let pre = Preprocessor::fit(&data, &train, &cfg.features)?;
    let x = pre.transform(&data)?.select_rows(&train);
    let y_train: Vec<u8> = train.iter().map(|&i| y[i]).collect();
    let selection = select_features(&x, &y_train, cfg.task, &cfg.selection)?;
    create_dir(&cfg.output_dir)?;
    let (score_table, feature_list) = write_selection(&selection, &cfg.output_dir)?;
    Ok(SelectOutcome {
        selection,
        score_table,
        feature_list,
    })
}

/// Everything needed to score new records: fitted preprocessing, the
/// selected columns and the trained detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub format_version: u32,
    pub task: Task,
    pub label_column: String,
    pub preprocessor: Preprocessor,
    pub features: Vec<String>,
    pub models: Vec<TrainedModel>,
}

impl Pipeline {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Pipeline = serde_json::from_str(&text)?;
        let versions = std::iter::once(p.format_version).chain(p.models.iter().map(|m| m.format_version));
        for v in versions {
            if v != MODEL_FORMAT_VERSION {
                return Err(Error::Config(format!(
                    "{}: model format version {v}, expected {MODEL_FORMAT_VERSION}",
                    path.display()
                )));
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub report: EvalReport,
    pub files: Vec<PathBuf>,
    /// Names of detectors whose rows have status `failed`.
    pub failed: Vec<String>,
}

/// Full pipeline: load, preprocess, select, fit, evaluate, write reports
/// and the fitted pipeline.
pub fn cmd_bench(cfg: &RunConfig, emit: &mut dyn FnMut(PhaseEvent)) -> Result<BenchSummary> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let (data, source) = cfg.load_dataset()?;
    let mut opts = BenchOptions::new(cfg.specs()?, seed);
    opts.features = cfg.features.clone();
    opts.selection = cfg.selection.clone();
    opts.source = source;
    opts.config = cfg.echo();
    if let Some(r) = cfg.timing_repeats {
        opts.timing_repeats = r.max(1);
    }
    let outcome = run_benchmark(&data, &opts, emit)?;

    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let mut files = emit_report(&outcome.report, dir, &cfg.report_formats()?)?;
    if !outcome.selection.tables.is_empty() {
        let (table, list) = write_selection(&outcome.selection, dir)?;
        files.push(table);
        files.push(list);
    }
    let pipeline = Pipeline {
        format_version: MODEL_FORMAT_VERSION,
        task: cfg.task,
        label_column: cfg.label_column.clone(),
        preprocessor: outcome.preprocessor,
        features: outcome.selection.features.clone(),
        models: outcome.models.into_iter().flatten().collect(),
    };
    let path = dir.join(PIPELINE_JSON);
    pipeline.save(&path)?;
    files.push(path);

    let failed = outcome
        .report
        .models
        .iter()
        .filter(|r| r.status == RowStatus::Failed)
        .map(|r| r.model.clone())
        .collect();
    Ok(BenchSummary {
        report: outcome.report,
        files,
        failed,
    })
}

/// Re-renders a saved JSON report into the requested formats.
pub fn cmd_report(report_path: &Path, out_dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(report_path).map_err(|e| Error::io(report_path, e))?;
    let report = report_from_json(&text)?;
    emit_report(&report, out_dir, formats)
}

/// Scores labelled records with a saved pipeline. Writes one row per
/// record with the label and each detector's score and flag.
pub fn cmd_score(pipeline_path: &Path, input: &Path, out_dir: &Path) -> Result<PathBuf> {
    let p = Pipeline::load(pipeline_path)?;
    let data = match p.task {
        Task::Device => Dataset::Device(parse_device_csv(input, &p.label_column)?.records),
        Task::Cyber => Dataset::Cyber(parse_attack_csv(input, &p.label_column)?.records),
    };
    let x = p.preprocessor.transform(&data)?.select_columns(&p.features)?;
    let labels = data.labels();
    let mut columns = Vec::new();
    for m in &p.models {
        let scores = m.score(&x)?;
        let flags = m.flag(&scores);
        columns.push((m.family().name(), scores, flags));
    }

    create_dir(out_dir)?;
    let path = out_dir.join(SCORES_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&path, io),
        other => Error::InvalidArgument(format!("{other:?}")),
    })?;
    let mut header = vec!["row".to_string(), p.label_column.clone()];
    for (name, _, _) in &columns {
        header.push(format!("{name}_score"));
        header.push(format!("{name}_flag"));
    }
    w.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![i.to_string(), label.to_string()];
        for (_, scores, flags) in &columns {
            row.push(scores[i].to_string());
            row.push(flags[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: Task, dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::new(task, 3);
        cfg.generator = Some(GenConfig::new(1200, if task == Task::Device { 0.2 } else { 0.1 }, 0));
        cfg.output_dir = dir.to_path_buf();
        cfg.timing_repeats = Some(1);
        cfg
    }

    #[test]
    fn seed_is_mandatory_and_sources_exclusive() {
        let mut cfg = RunConfig::new(Task::Device, 1);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.generator = Some(GenConfig::new(100, 0.2, 0));
        cfg.validate().unwrap();
        cfg.inputs.push("x.csv".into());
        assert!(cfg.validate().is_err());
        cfg.inputs.clear();
        cfg.seed = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parses_json_config() {
        let cfg = RunConfig::from_json(
            r#"{"task": "cyber", "seed": 5, "generator": {"n_records": 500, "anomaly_rate": 0.1},
                "models": ["knn", "gbdt"], "overrides": {"knn": {"k": 3}, "all": {"seed": 9}}}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let specs = cfg.specs().unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].family, Family::Knn);
        assert_eq!(specs[0].k, 3);
        assert_eq!(specs[1].seed, 9);
        assert_eq!(specs[0].nu, 0.1);
        assert!(RunConfig::from_json(r#"{"task": "cyber", "seed": 1, "bogus": 1}"#).is_err());
    }

    #[test]
    fn bad_override_rejected() {
        let mut cfg = RunConfig::new(Task::Device, 1);
        cfg.generator = Some(GenConfig::new(100, 0.2, 0));
        cfg.overrides
            .insert("gbdt".into(), serde_json::from_str(r#"{"depth": 3}"#).unwrap());
        assert!(matches!(cfg.specs(), Err(Error::Config(_))));
        cfg.overrides.clear();
        cfg.overrides
            .insert("gbdt".into(), serde_json::from_str(r#"{"max_depth": 0}"#).unwrap());
        assert!(cfg.specs().is_err());
    }

    #[test]
    fn bench_writes_everything_under_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Task::Device, dir.path());
        cfg.models = Some(vec!["gbdt".into(), "knn".into()]);
        let s = cmd_bench(&cfg, &mut |_| {}).unwrap();
        assert!(s.failed.is_empty());
        for f in &s.files {
            assert!(f.starts_with(dir.path()));
            assert!(f.exists());
        }
        let ok: Vec<_> = s.report.models.iter().filter(|r| r.status == RowStatus::Ok).collect();
        assert_eq!(ok.len(), 2);

        let out = dir.path().join("scored");
        let gen = cmd_generate(&[Task::Device], &GenConfig::new(300, 0.2, 8), "label", &out).unwrap();
        let scores = cmd_score(&dir.path().join(PIPELINE_JSON), &gen[0].path, &out).unwrap();
        let text = fs::read_to_string(scores).unwrap();
        assert_eq!(text.lines().count(), 301);
        assert!(text.starts_with("row,label,gbdt_score,gbdt_flag,knn_score,knn_flag"));

        let again = dir.path().join("again");
        let files = cmd_report(&dir.path().join("report.json"), &again, &[ReportFormat::Csv]).unwrap();
        assert_eq!(
            fs::read_to_string(&files[0]).unwrap(),
            fs::read_to_string(dir.path().join("report.csv")).unwrap()
        );
    }

    #[test]
    fn select_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = cmd_select(&small(Task::Cyber, a.path())).unwrap();
        let rb = cmd_select(&small(Task::Cyber, b.path())).unwrap();
        assert_eq!(fs::read(&ra.score_table).unwrap(), fs::read(&rb.score_table).unwrap());
        assert_eq!(fs::read(&ra.feature_list).unwrap(), fs::read(&rb.feature_list).unwrap());
    }
}
