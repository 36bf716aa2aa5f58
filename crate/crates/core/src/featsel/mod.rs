//! Feature scoring (ANOVA F, mutual information, recursive elimination) and
//! integration of the per-method selections into one feature list.

mod rfe;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{FeatureMatrix, Task};
use crate::error::{Error, Result};

pub use rfe::{rfe_select, RfeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AnovaF,
    MutualInfo,
    RfeRank,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AnovaF => "anova_f",
            Method::MutualInfo => "mutual_info",
            Method::RfeRank => "rfe_rank",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One score per feature from a single method. Higher is better; ANOVA may
/// produce `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScoreTable {
    pub method: Method,
    pub features: Vec<String>,
    pub scores: Vec<f64>,
    pub selected: Vec<bool>,
}

impl FeatureScoreTable {
    pub fn new(method: Method, features: Vec<String>, scores: Vec<f64>) -> Self {
        let selected = vec![false; features.len()];
        Self {
            method,
            features,
            scores,
            selected,
        }
    }

    /// Indices of the `k` best features: score descending, column order on
    /// ties.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }

    /// Marks the top `k` features as selected.
    pub fn select_top(mut self, k: usize) -> Self {
        self.selected = vec![false; self.features.len()];
        for i in self.top_k(k) {
            self.selected[i] = true;
        }
        self
    }

    pub fn score_of(&self, feature: &str) -> Option<f64> {
        self.features
            .iter()
            .position(|f| f == feature)
            .map(|i| self.scores[i])
    }
}

/// Formats a score for export; infinities become `inf`.
pub fn format_score(score: f64) -> String {
    if score == f64::INFINITY {
        "inf".to_string()
    } else {
        score.to_string()
    }
}

pub fn parse_score(text: &str) -> Option<f64> {
    match text.trim() {
        "inf" => Some(f64::INFINITY),
        t => t.parse().ok(),
    }
}

/// CSV with columns `feature, method, score, selected`.
pub fn write_score_csv(path: impl AsRef<Path>, tables: &[FeatureScoreTable]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    w.write_record(["feature", "method", "score", "selected"])?;
    for t in tables {
        for i in 0..t.features.len() {
            w.write_record([
                t.features[i].as_str(),
                t.method.name(),
                &format_score(t.scores[i]),
                if t.selected[i] { "1" } else { "0" },
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_labels(x: &FeatureMatrix, y: &[u8]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Two-group one-way ANOVA F statistic of one feature.
fn anova_column(x: &[f64], y: &[u8]) -> f64 {
    let n = x.len() as f64;
    let mut count = [0usize; 2];
    let mut sum = [0.0f64; 2];
    for (&v, &g) in x.iter().zip(y) {
        count[g as usize] += 1;
        sum[g as usize] += v;
    }
    let mean_g = [sum[0] / count[0] as f64, sum[1] / count[1] as f64];
    let mean = (sum[0] + sum[1]) / n;
    let between = count[0] as f64 * (mean_g[0] - mean).powi(2)
        + count[1] as f64 * (mean_g[1] - mean).powi(2);

    // Constant groups have exactly zero within-group spread, independent of
    // rounding in the group means.
    let mut first: [Option<f64>; 2] = [None, None];
    let mut constant = [true; 2];
    let mut within = 0.0;
    for (&v, &g) in x.iter().zip(y) {
        let g = g as usize;
        within += (v - mean_g[g]).powi(2);
        match first[g] {
            None => first[g] = Some(v),
            Some(f) if f != v => constant[g] = false,
            _ => {}
        }
    }
    if constant[0] && constant[1] {
        within = 0.0;
    }
    let ms_between = between; // G - 1 = 1
    let ms_within = within / (n - 2.0);
    if ms_within == 0.0 {
        if first[0] != first[1] {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        ms_between / ms_within
    }
}

/// ANOVA F value of every feature against a binary label.
pub fn anova_f(x: &FeatureMatrix, y: &[u8]) -> Result<FeatureScoreTable> {
    check_labels(x, y)?;
    if x.n_rows() < 3 {
        return Err(Error::InvalidArgument("ANOVA needs at least 3 rows".into()));
    }
    let scores = (0..x.n_cols())
        .into_par_iter()
        .map(|c| anova_column(&x.column(c), y))
        .collect();
    Ok(FeatureScoreTable::new(
        Method::AnovaF,
        x.column_names().to_vec(),
        scores,
    ))
}

/// Equal-frequency bin of each value: bins follow rank order and tied values
/// share the bin of their first rank.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let bin = start * bins / n;
        for &i in &order[start..end] {
            out[i] = bin;
        }
        start = end;
    }
    out
}

fn mutual_info_column(x: &[f64], y: &[u8], bins: usize) -> f64 {
    let n = x.len() as f64;
    let b = equal_frequency_bins(x, bins);
    let mut joint = vec![[0usize; 2]; bins];
    for (&bin, &c) in b.iter().zip(y) {
        joint[bin][c as usize] += 1;
    }
    let class = [
        joint.iter().map(|j| j[0]).sum::<usize>() as f64,
        joint.iter().map(|j| j[1]).sum::<usize>() as f64,
    ];
    let mut mi = 0.0;
    for cell in &joint {
        let pb = (cell[0] + cell[1]) as f64 / n;
        for c in 0..2 {
            if cell[c] > 0 {
                let p = cell[c] as f64 / n;
                mi += p * (p / (pb * class[c] / n)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Mutual information (nats) between each equal-frequency-binned feature
/// and the label.
pub fn mutual_info(x: &FeatureMatrix, y: &[u8], bins: usize) -> Result<FeatureScoreTable> {
    if bins < 2 {
        return Err(Error::InvalidArgument("mutual information needs at least 2 bins".into()));
    }
    if y.len() != x.n_rows() || y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("labels must be 0/1, one per row".into()));
    }
    let scores = (0..x.n_cols())
        .into_par_iter()
        .map(|c| {
            if x.n_rows() == 0 {
                0.0
            } else {
                mutual_info_column(&x.column(c), y, bins)
            }
        })
        .collect();
    Ok(FeatureScoreTable::new(
        Method::MutualInfo,
        x.column_names().to_vec(),
        scores,
    ))
}

/// Union of each table's top `top_k` features, in the tables' column order.
pub fn union_select(tables: &[FeatureScoreTable], top_k: usize) -> Result<Vec<String>> {
    let first = tables
        .first()
        .ok_or_else(|| Error::InvalidArgument("no score tables to integrate".into()))?;
    if tables.iter().any(|t| t.features != first.features) {
        return Err(Error::InvalidArgument(
            "score tables cover different feature lists".into(),
        ));
    }
    let chosen: BTreeSet<usize> = tables.iter().flat_map(|t| t.top_k(top_k)).collect();
    if chosen.is_empty() {
        return Err(Error::InvalidArgument("feature selection produced an empty set".into()));
    }
    Ok(chosen.into_iter().map(|i| first.features[i].clone()).collect())
}

/// Which methods run and how many features each keeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// When false every feature is kept.
    pub enabled: bool,
    pub anova: bool,
    pub mutual_info: bool,
    pub rfe: bool,
    /// Features kept per method; `None` uses the task default.
    pub top_k: Option<usize>,
    pub mi_bins: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            anova: true,
            mutual_info: true,
            rfe: true,
            top_k: None,
            mi_bins: 10,
        }
    }
}

impl SelectionConfig {
    /// Per-method default: three features for device data; for network data
    /// a value whose union lands at 28 features on generated traffic.
    pub fn default_top_k(task: Task) -> usize {
        match task {
            Task::Device => 3,
            Task::Cyber => CYBER_TOP_K,
        }
    }

    pub fn top_k_for(&self, task: Task) -> usize {
        self.top_k.unwrap_or_else(|| Self::default_top_k(task))
    }
}

const CYBER_TOP_K: usize = 22;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub tables: Vec<FeatureScoreTable>,
    pub features: Vec<String>,
}

/// Runs the enabled methods and integrates their selections.
pub fn select_features(
    x: &FeatureMatrix,
    y: &[u8],
    task: Task,
    cfg: &SelectionConfig,
) -> Result<Selection> {
    if !cfg.enabled {
        return Ok(Selection {
            tables: Vec::new(),
            features: x.column_names().to_vec(),
        });
    }
    let k = cfg.top_k_for(task).min(x.n_cols());
    let mut tables = Vec::new();
    if cfg.anova {
        tables.push(anova_f(x, y)?.select_top(k));
    }
    if cfg.mutual_info {
        tables.push(mutual_info(x, y, cfg.mi_bins)?.select_top(k));
    }
    if cfg.rfe {
        if k == 0 {
            return Err(Error::InvalidArgument("feature selection produced an empty set".into()));
        }
        tables.push(rfe_select(x, y, k, &RfeConfig::default())?);
    }
    let features = union_select(&tables, k)?;
    Ok(Selection { tables, features })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(cols: &[(&str, Vec<f64>)]) -> FeatureMatrix {
        FeatureMatrix::from_columns(
            cols.iter()
                .map(|(n, v)| (n.to_string(), v.iter().map(|&x| Some(x)).collect()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn anova_examples() {
        let y = [0, 0, 0, 1, 1, 1];
        let m = matrix(&[
            ("sep", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            ("same", vec![1.0, 2.0, 3.0, 3.0, 2.0, 1.0]),
        ]);
        let t = anova_f(&m, &y).unwrap();
        assert!((t.scores[0] - 13.5).abs() < 1e-12);
        assert_eq!(t.scores[1], 0.0);

        let m = matrix(&[("deg", vec![1.0, 1.0, 2.0, 2.0]), ("const", vec![7.0; 4])]);
        let t = anova_f(&m, &[0, 0, 1, 1]).unwrap();
        assert_eq!(t.scores[0], f64::INFINITY);
        assert_eq!(t.scores[1], 0.0);
        assert!(matches!(anova_f(&m, &[0, 0, 0, 0]), Err(Error::SingleClass)));
    }

    #[test]
    fn mi_perfect_dependence_is_ln2() {
        let x: Vec<f64> = (0..1000).map(f64::from).collect();
        let y: Vec<u8> = (0..1000).map(|i| u8::from(i >= 500)).collect();
        let t = mutual_info(&matrix(&[("x", x), ("c", vec![3.0; 1000])]), &y, 2).unwrap();
        assert!((t.scores[0] - std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(t.scores[1], 0.0);
    }

    #[test]
    fn tied_values_share_a_bin() {
        let b = equal_frequency_bins(&[0.0, 0.0, 0.0, 1.0], 2);
        assert_eq!(b, vec![0, 0, 0, 1]);
        let b = equal_frequency_bins(&[3.0, 1.0, 2.0, 4.0], 2);
        assert_eq!(b, vec![1, 0, 0, 1]);
    }

    #[test]
    fn union_examples() {
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let t = |s: [f64; 4]| FeatureScoreTable::new(Method::AnovaF, names.clone(), s.to_vec());
        let tables = [
            t([4.0, 3.0, 0.0, 0.0]),
            t([0.0, 3.0, 4.0, 0.0]),
            t([0.0, 0.0, 3.0, 4.0]),
        ];
        assert_eq!(union_select(&tables, 2).unwrap(), names);
        let same = [t([1.0, 5.0, 0.0, 2.0]), t([1.0, 5.0, 0.0, 2.0])];
        assert_eq!(union_select(&same, 2).unwrap(), vec!["b", "d"]);
        assert!(union_select(&tables, 0).is_err());
        assert!(union_select(&[], 2).is_err());
    }

    #[test]
    fn infinity_outranks_finite_scores() {
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let t = FeatureScoreTable::new(Method::AnovaF, names, vec![1e300, f64::INFINITY]);
        assert_eq!(t.top_k(1), vec![1]);
        assert_eq!(format_score(f64::INFINITY), "inf");
        assert_eq!(parse_score("inf"), Some(f64::INFINITY));
    }

    #[test]
    fn score_csv_has_one_row_per_feature_and_method() {
        let dir = tempfile::tempdir().unwrap();
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let tables = [
            FeatureScoreTable::new(Method::AnovaF, names.clone(), vec![f64::INFINITY, 1.0]).select_top(1),
            FeatureScoreTable::new(Method::MutualInfo, names, vec![0.1, 0.2]).select_top(1),
        ];
        let path = dir.path().join("scores.csv");
        write_score_csv(&path, &tables).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "feature,method,score,selected");
        assert_eq!(lines[1], "a,anova_f,inf,1");
        assert_eq!(lines.len(), 5);
    }
}
