//! Report files: canonical JSON, a per-model CSV and SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datamodel::{EvalReport, ModelRow, RowStatus};
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 9] = [
    "model",
    "protocol",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "roc_auc",
    "detect_seconds",
    "status",
];

/// Metrics that get their own bar chart.
pub const CHART_METRICS: [&str; 5] = ["accuracy", "precision", "recall", "f1", "roc_auc"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

/// Pretty JSON with object keys in sorted order.
pub fn report_to_json(report: &EvalReport) -> Result<String> {
    let value = serde_json::to_value(report)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn report_from_json(text: &str) -> Result<EvalReport> {
    Ok(serde_json::from_str(text)?)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_to_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in &report.models {
        w.write_record([
            r.model.clone(),
            r.protocol.name().to_string(),
            cell(r.accuracy),
            cell(r.precision),
            cell(r.recall),
            cell(r.f1),
            cell(r.roc_auc),
            cell(r.detect_seconds),
            r.status.name().to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn metric(row: &ModelRow, name: &str) -> Option<f64> {
    match name {
        "accuracy" => row.accuracy,
        "precision" => row.precision,
        "recall" => row.recall,
        "f1" => row.f1,
        "roc_auc" => row.roc_auc,
        "detect_seconds" => row.detect_seconds,
        _ => None,
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String) {
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        HEIGHT - BOTTOM,
        WIDTH - RIGHT,
        HEIGHT - BOTTOM
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        HEIGHT - BOTTOM
    );
}

/// Vertical axis ticks at `values`, mapped by `to_y`.
fn y_ticks(s: &mut String, values: &[(f64, String)], to_y: impl Fn(f64) -> f64) {
    for (v, label) in values {
        let y = to_y(*v);
        let _ = writeln!(
            s,
            r#"<g class="tick"><line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text></g>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            escape(label)
        );
    }
}

fn completed(report: &EvalReport) -> Vec<&ModelRow> {
    report.models.iter().filter(|r| r.status == RowStatus::Ok).collect()
}

/// Bar chart of one metric on a fixed `[0, 1]` axis.
pub fn metric_chart(report: &EvalReport, name: &str) -> String {
    let rows = completed(report);
    let mut s = svg_open(&format!("{name} ({} task)", report.task));
    axes(&mut s);
    let plot_h = HEIGHT - TOP - BOTTOM;
    let to_y = |v: f64| HEIGHT - BOTTOM - v.clamp(0.0, 1.0) * plot_h;
    let ticks: Vec<(f64, String)> = (0..=5).map(|i| (i as f64 / 5.0, format!("{:.1}", i as f64 / 5.0))).collect();
    y_ticks(&mut s, &ticks, to_y);
    let slot = (WIDTH - LEFT - RIGHT) / rows.len().max(1) as f64;
    for (i, r) in rows.iter().enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let label_x = LEFT + slot * (i as f64 + 0.5);
        if let Some(v) = metric(r, name) {
            let y = to_y(v);
            let _ = writeln!(
                s,
                r##"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#4c72b0"><title>{}: {v}</title></rect>"##,
                slot * 0.7,
                HEIGHT - BOTTOM - y,
                escape(&r.model)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{label_x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 18.0,
            escape(&r.model)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Decade range covering the positive values, at least one decade wide.
pub fn log_axis(values: &[f64]) -> (i32, i32) {
    let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
    if pos.is_empty() {
        return (-3, 0);
    }
    let lo = pos.iter().copied().fold(f64::INFINITY, f64::min).log10().floor() as i32;
    let hi = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10().ceil() as i32;
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1)
    }
}

fn decade_label(e: i32) -> String {
    format!("1e{e}")
}

/// Detection cost per model on a logarithmic axis.
pub fn cost_chart(report: &EvalReport) -> String {
    let rows: Vec<&ModelRow> = completed(report)
        .into_iter()
        .filter(|r| r.detect_seconds.is_some())
        .collect();
    let costs: Vec<f64> = rows.iter().filter_map(|r| r.detect_seconds).collect();
    let (lo, hi) = log_axis(&costs);
    let mut s = svg_open(&format!("Detection cost, seconds (log scale, {} task)", report.task));
    axes(&mut s);
    let plot_h = HEIGHT - TOP - BOTTOM;
    let to_y = |v: f64| {
        let t = (v.log10() - lo as f64) / (hi - lo) as f64;
        HEIGHT - BOTTOM - t.clamp(0.0, 1.0) * plot_h
    };
    let ticks: Vec<(f64, String)> = (lo..=hi).map(|e| (10f64.powi(e), decade_label(e))).collect();
    y_ticks(&mut s, &ticks, to_y);
    let slot = (WIDTH - LEFT - RIGHT) / rows.len().max(1) as f64;
    for (i, r) in rows.iter().enumerate() {
        let v = r.detect_seconds.unwrap_or_default();
        let y = to_y(v);
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#dd8452"><title>{}: {v} s</title></rect>"##,
            slot * 0.7,
            HEIGHT - BOTTOM - y,
            escape(&r.model)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + slot * (i as f64 + 0.5),
            HEIGHT - BOTTOM + 18.0,
            escape(&r.model)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// F1 against detection cost (log-scaled horizontal axis).
pub fn f1_cost_scatter(report: &EvalReport) -> String {
    let rows: Vec<&ModelRow> = completed(report)
        .into_iter()
        .filter(|r| r.detect_seconds.is_some() && r.f1.is_some())
        .collect();
    let costs: Vec<f64> = rows.iter().filter_map(|r| r.detect_seconds).collect();
    let (lo, hi) = log_axis(&costs);
    let mut s = svg_open(&format!("F1 vs detection cost ({} task)", report.task));
    axes(&mut s);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let to_x = |v: f64| LEFT + ((v.log10() - lo as f64) / (hi - lo) as f64).clamp(0.0, 1.0) * plot_w;
    let to_y = |v: f64| HEIGHT - BOTTOM - v.clamp(0.0, 1.0) * plot_h;
    let ticks: Vec<(f64, String)> = (0..=5).map(|i| (i as f64 / 5.0, format!("{:.1}", i as f64 / 5.0))).collect();
    y_ticks(&mut s, &ticks, to_y);
    for e in lo..=hi {
        let x = to_x(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<g class="tick"><line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text></g>"#,
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 5.0,
            HEIGHT - BOTTOM + 20.0,
            decade_label(e)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">detection cost (s)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 20.0
    );
    for r in rows {
        let (x, y) = (to_x(r.detect_seconds.unwrap_or(1.0)), to_y(r.f1.unwrap_or(0.0)));
        let _ = writeln!(
            s,
            r##"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="5" fill="#55a868"/><text x="{:.2}" y="{:.2}">{}</text>"##,
            x + 7.0,
            y - 7.0,
            escape(&r.model)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, content: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes the requested formats under `dir` and returns the file paths.
pub fn emit_report(report: &EvalReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Json => write(dir.join("report.json"), &report_to_json(report)?, &mut written)?,
            ReportFormat::Csv => write(dir.join("report.csv"), &report_to_csv(report)?, &mut written)?,
            ReportFormat::Svg => {
                for m in CHART_METRICS {
                    write(dir.join(format!("chart_{m}.svg")), &metric_chart(report, m), &mut written)?;
                }
                write(dir.join("chart_cost_log.svg"), &cost_chart(report), &mut written)?;
                write(dir.join("chart_f1_vs_cost.svg"), &f1_cost_scatter(report), &mut written)?;
            }
        }
    }
    Ok(written)
}
