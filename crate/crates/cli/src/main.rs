//! `shield`: generate data, select features, benchmark detectors, render
//! reports and score new records.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shield_core::commands::{
    cmd_bench, cmd_generate, cmd_report, cmd_score, cmd_select, load_gen_config, RunConfig,
    DEFAULT_LABEL_COLUMN,
};
use shield_core::eval::{ReportFormat, Stage};
use shield_core::ingest::GenConfig;
use shield_core::{Error, Preset, Task};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DETECTOR: u8 = 3;

#[derive(Parser)]
#[command(name = "shield", version, about = "Anomaly detection for IoT healthcare telemetry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic labelled device and/or network CSV files.
    Generate(GenerateArgs),
    /// Score features with ANOVA F, mutual information and RFE and write the union.
    Select(RunArgs),
    /// Run the full pipeline and write report files and the fitted pipeline.
    Bench(RunArgs),
    /// Re-render CSV and SVG files from a saved JSON report.
    Report(ReportArgs),
    /// Score a labelled CSV with a saved pipeline.
    Score(ScoreArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// device, cyber or both.
    #[arg(long, default_value = "both")]
    task: String,
    #[arg(long)]
    seed: u64,
    /// Records per dataset [default: 100000].
    #[arg(long)]
    n_records: Option<usize>,
    /// Anomaly fraction; defaults to 0.2 for device data and 0.1 for network data.
    #[arg(long)]
    anomaly_rate: Option<f64>,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_column: String,
    /// JSON generator config; flags above override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "shield-out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// device or cyber.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Input CSV files (comma separated or repeated).
    #[arg(long = "input", value_delimiter = ',')]
    inputs: Vec<PathBuf>,
    /// Generate this many records instead of reading inputs.
    #[arg(long)]
    n_records: Option<usize>,
    #[arg(long)]
    anomaly_rate: Option<f64>,
    #[arg(long)]
    label_column: Option<String>,
    /// Features kept per selection method.
    #[arg(long)]
    top_k: Option<usize>,
    /// Keep every feature.
    #[arg(long)]
    no_selection: bool,
    /// table3 or table4.
    #[arg(long)]
    preset: Option<String>,
    /// Detector families to run, e.g. `gbdt,knn`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Report formats among json, csv, svg.
    #[arg(long, value_delimiter = ',')]
    formats: Option<Vec<String>>,
    /// Timed scoring repeats (median reported).
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print pipeline phases to stderr.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved report.json.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "csv,svg")]
    formats: Vec<String>,
    /// Accepted for uniformity; rendering is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "shield-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// pipeline.json written by `bench`.
    #[arg(long)]
    pipeline: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Accepted for uniformity; scoring is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "shield-out")]
    out: PathBuf,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_usage() {
            EXIT_USAGE
        } else if matches!(e, Error::NonConvergence { .. } | Error::Divergence { .. }) {
            EXIT_DETECTOR
        } else {
            EXIT_DATA
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn default_rate(task: Task) -> f64 {
    match task {
        Task::Device => 0.2,
        Task::Cyber => 0.1,
    }
}

fn resolve(args: &RunArgs) -> Result<RunConfig, Failure> {
    let task: Option<Task> = args.task.as_deref().map(str::parse).transpose()?;
    let mut cfg = match (&args.config, task) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(t)) => {
            let mut c = RunConfig::new(t, 0);
            c.seed = None;
            c
        }
        (None, None) => return Err(usage("either --config or --task is required")),
    };
    if let Some(t) = task {
        cfg.task = t;
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if !args.inputs.is_empty() {
        cfg.inputs = args.inputs.clone();
        cfg.generator = None;
    }
    if args.n_records.is_some() || args.anomaly_rate.is_some() {
        if !args.inputs.is_empty() {
            return Err(usage("--input cannot be combined with --n-records/--anomaly-rate"));
        }
        let mut g = cfg
            .generator
            .take()
            .unwrap_or_else(|| GenConfig::new(100_000, default_rate(cfg.task), 0));
        if let Some(n) = args.n_records {
            g.n_records = n;
        }
        if let Some(r) = args.anomaly_rate {
            g.anomaly_rate = r;
        }
        cfg.generator = Some(g);
        cfg.inputs.clear();
    }
    if let Some(l) = &args.label_column {
        cfg.label_column = l.clone();
    }
    if let Some(k) = args.top_k {
        cfg.selection.top_k = Some(k);
    }
    if args.no_selection {
        cfg.selection.enabled = false;
    }
    if let Some(p) = &args.preset {
        cfg.preset = Some(p.parse::<Preset>()?);
    }
    if let Some(m) = &args.models {
        cfg.models = Some(m.clone());
    }
    if let Some(f) = &args.formats {
        cfg.formats = f.clone();
    }
    if args.repeats.is_some() {
        cfg.timing_repeats = args.repeats;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn run_generate(args: &GenerateArgs) -> Result<(), Failure> {
    let tasks = match args.task.to_ascii_lowercase().as_str() {
        "both" => vec![Task::Device, Task::Cyber],
        other => vec![other.parse::<Task>()?],
    };
    let base = match &args.config {
        Some(path) => Some(load_gen_config(path)?),
        None => None,
    };
    for task in tasks {
        let mut gen = base
            .clone()
            .unwrap_or_else(|| GenConfig::new(100_000, default_rate(task), 0));
        if let Some(n) = args.n_records {
            gen.n_records = n;
        }
        if let Some(r) = args.anomaly_rate {
            gen.anomaly_rate = r;
        }
        gen.seed = args.seed;
        for f in cmd_generate(&[task], &gen, &args.label_column, &args.out)? {
            println!(
                "{}: {} rows, {} anomalies, {} normal",
                f.path.display(),
                f.rows,
                f.anomalies,
                f.rows - f.anomalies
            );
        }
    }
    Ok(())
}

fn run_select(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve(args)?;
    let out = cmd_select(&cfg)?;
    for t in &out.selection.tables {
        let chosen: Vec<&str> = t
            .features
            .iter()
            .zip(&t.selected)
            .filter(|(_, s)| **s)
            .map(|(f, _)| f.as_str())
            .collect();
        println!("{}: {}", t.method.name(), chosen.join(", "));
    }
    println!(
        "union ({} features): {}",
        out.selection.features.len(),
        out.selection.features.join(", ")
    );
    println!("wrote {}", out.score_table.display());
    println!("wrote {}", out.feature_list.display());
    Ok(())
}

fn run_bench(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve(args)?;
    let verbose = args.verbose;
    let summary = cmd_bench(&cfg, &mut |e| {
        if verbose && e.stage == Stage::End {
            match &e.model {
                Some(m) => eprintln!("done {:?} ({m})", e.phase),
                None => eprintln!("done {:?}", e.phase),
            }
        }
    })?;
    let r = &summary.report;
    println!(
        "task {} protocol {} rows {} (train {}, eval {}) features {}",
        r.task,
        r.protocol.name(),
        r.dataset.n_rows,
        r.dataset.n_train,
        r.dataset.n_eval,
        r.dataset.features.len()
    );
    println!(
        "{:<18}{:>10}{:>10}{:>10}{:>10}{:>10}{:>14}  status",
        "model", "accuracy", "precision", "recall", "f1", "roc_auc", "detect_s"
    );
    for m in &r.models {
        println!(
            "{:<18}{:>10}{:>10}{:>10}{:>10}{:>10}{:>14}  {}",
            m.model,
            fmt_metric(m.accuracy),
            fmt_metric(m.precision),
            fmt_metric(m.recall),
            fmt_metric(m.f1),
            fmt_metric(m.roc_auc),
            m.detect_seconds.map_or_else(|| "-".into(), |s| format!("{s:.6}")),
            m.status.name()
        );
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    if !summary.failed.is_empty() {
        for m in r.models.iter().filter(|m| m.error.is_some()) {
            eprintln!("error: {}: {}", m.model, m.error.as_deref().unwrap_or_default());
        }
        return Err(Failure {
            code: EXIT_DETECTOR,
            message: format!("detectors failed: {}", summary.failed.join(", ")),
        });
    }
    Ok(())
}

fn run_report(args: &ReportArgs) -> Result<(), Failure> {
    let formats = args
        .formats
        .iter()
        .map(|f| f.parse::<ReportFormat>())
        .collect::<Result<Vec<_>, _>>()?;
    for f in cmd_report(&args.report, &args.out, &formats)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run_score(args: &ScoreArgs) -> Result<(), Failure> {
    let path = cmd_score(&args.pipeline, &args.input, &args.out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("SHIELD_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("SHIELD_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Generate(a) => run_generate(a),
        Command::Select(a) => run_select(a),
        Command::Bench(a) => run_bench(a),
        Command::Report(a) => run_report(a),
        Command::Score(a) => run_score(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
