//! Cleaning, scaling and feature engineering.
//!
//! Every fitted transform is split into a `fit` step that reads training rows
//! only and a pure `transform` step, so the same statistics can be reapplied
//! to held-out data. Standard deviations are population deviations.

mod features;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::datamodel::FeatureMatrix;
use crate::error::{Error, Result};

pub use features::{Dataset, FeatureConfig, Preprocessor, DEVICE_NUMERIC_COLUMNS, NET_NUMERIC_COLUMNS};

/// Floor applied to standard deviations in the TCP anomaly score.
pub const SCORE_EPSILON: f64 = 1e-9;

/// Flag columns combined into `tcp_anomaly_score`.
pub const TCP_SCORE_FLAGS: [&str; 4] = [
    "tcp.flags.ack",
    "tcp.flags.push",
    "tcp.flags.reset",
    "tcp.flags.syn",
];

pub const TCP_SCORE_COLUMN: &str = "tcp_anomaly_score";

/// Median of a non-empty slice; even counts average the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    })
}

/// Per-column medians used to fill missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianImputer {
    pub columns: Vec<String>,
    pub medians: Vec<f64>,
}

impl MedianImputer {
    pub fn fit(m: &FeatureMatrix) -> Result<Self> {
        let medians = (0..m.n_cols())
            .map(|c| {
                median(&m.present_values(c))
                    .ok_or_else(|| Error::AllMissing(m.column_names()[c].clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            columns: m.column_names().to_vec(),
            medians,
        })
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_columns(&self.columns, m)?;
        let mut values = m.values().to_vec();
        let n = m.n_cols();
        for i in 0..m.n_rows() {
            for c in 0..n {
                if m.is_missing(i, c) {
                    values[i * n + c] = self.medians[c];
                }
            }
        }
        FeatureMatrix::new(m.column_names().to_vec(), m.n_rows(), values)
    }
}

/// Fills every missing cell with its column's median over present cells.
pub fn impute_median(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    MedianImputer::fit(m)?.transform(m)
}

fn check_columns(expected: &[String], m: &FeatureMatrix) -> Result<()> {
    if expected != m.column_names() {
        return Err(Error::InvalidArgument(format!(
            "fitted on columns {:?}, got {:?}",
            expected,
            m.column_names()
        )));
    }
    Ok(())
}

/// Per-column summary statistics over present training values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub fitted_on_training: bool,
}

impl ScalerStats {
    pub fn fit(m: &FeatureMatrix) -> Result<Self> {
        let n = m.n_cols();
        let mut stats = Self {
            columns: m.column_names().to_vec(),
            mean: Vec::with_capacity(n),
            std: Vec::with_capacity(n),
            min: Vec::with_capacity(n),
            max: Vec::with_capacity(n),
            fitted_on_training: true,
        };
        for c in 0..n {
            let v = m.present_values(c);
            if v.is_empty() {
                return Err(Error::AllMissing(m.column_names()[c].clone()));
            }
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // A summed mean can miss a constant value by an ulp, which would
            // leave a spurious nonzero spread.
            let (mean, std) = if min == max {
                (min, 0.0)
            } else {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
                (mean, var.sqrt())
            };
            stats.mean.push(mean);
            stats.std.push(std);
            stats.min.push(min);
            stats.max.push(max);
        }
        Ok(stats)
    }

    pub fn standardize(&self, col: usize, x: f64) -> f64 {
        if self.std[col] > 0.0 {
            (x - self.mean[col]) / self.std[col]
        } else {
            0.0
        }
    }

    pub fn normalize(&self, col: usize, x: f64) -> f64 {
        let range = self.max[col] - self.min[col];
        if range > 0.0 {
            ((x - self.min[col]) / range).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

fn fit_or_reuse(m: &FeatureMatrix, stats: Option<&ScalerStats>) -> Result<ScalerStats> {
    match stats {
        Some(s) => {
            check_columns(&s.columns, m)?;
            Ok(s.clone())
        }
        None => ScalerStats::fit(m),
    }
}

/// `x' = (x - mean) / std`; constant columns map to 0. Fits when `stats` is
/// `None`, otherwise transforms with the given statistics.
pub fn standard_scale(
    m: &FeatureMatrix,
    stats: Option<&ScalerStats>,
) -> Result<(FeatureMatrix, ScalerStats)> {
    let stats = fit_or_reuse(m, stats)?;
    Ok((m.map_present(|c, x| stats.standardize(c, x)), stats))
}

/// `x' = (x - min) / (max - min)` clipped to `[0, 1]`; constant columns map
/// to 0.
pub fn minmax_scale(
    m: &FeatureMatrix,
    stats: Option<&ScalerStats>,
) -> Result<(FeatureMatrix, ScalerStats)> {
    let stats = fit_or_reuse(m, stats)?;
    Ok((m.map_present(|c, x| stats.normalize(c, x)), stats))
}

/// Category vocabularies learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    /// `(column, sorted categories)` in input order.
    pub vocabularies: Vec<(String, Vec<String>)>,
}

impl OneHotEncoder {
    pub fn fit<S: AsRef<str>>(columns: &[(&str, &[S])]) -> Self {
        let vocabularies = columns
            .iter()
            .map(|(name, values)| {
                let cats: BTreeSet<&str> = values.iter().map(|v| v.as_ref()).collect();
                (name.to_string(), cats.into_iter().map(str::to_string).collect())
            })
            .collect();
        Self { vocabularies }
    }

    pub fn output_columns(&self) -> Vec<String> {
        self.vocabularies
            .iter()
            .flat_map(|(name, cats)| cats.iter().map(move |c| format!("{name}_{c}")))
            .collect()
    }

    /// One 0/1 column per (column, category); unseen categories encode as
    /// all zeros. `columns` must follow the fitted column order.
    pub fn transform<S: AsRef<str>>(&self, columns: &[(&str, &[S])]) -> Result<FeatureMatrix> {
        if columns.len() != self.vocabularies.len()
            || columns
                .iter()
                .zip(&self.vocabularies)
                .any(|((a, _), (b, _))| a != b)
        {
            return Err(Error::InvalidArgument(
                "categorical columns differ from the fitted encoder".into(),
            ));
        }
        let n_rows = columns.first().map_or(0, |(_, v)| v.len());
        if columns.iter().any(|(_, v)| v.len() != n_rows) {
            return Err(Error::InvalidArgument("categorical columns differ in length".into()));
        }
        let width: usize = self.vocabularies.iter().map(|(_, c)| c.len()).sum();
        let mut values = vec![0.0; n_rows * width];
        let mut offset = 0;
        for ((_, col), (_, cats)) in columns.iter().zip(&self.vocabularies) {
            for (i, v) in col.iter().enumerate() {
                if let Ok(k) = cats.binary_search_by(|c| c.as_str().cmp(v.as_ref())) {
                    values[i * width + offset + k] = 1.0;
                }
            }
            offset += cats.len();
        }
        FeatureMatrix::new(self.output_columns(), n_rows, values)
    }
}

/// Fits a vocabulary on `columns` and encodes them.
pub fn one_hot_encode<S: AsRef<str>>(columns: &[(&str, &[S])]) -> Result<(FeatureMatrix, OneHotEncoder)> {
    let enc = OneHotEncoder::fit(columns);
    Ok((enc.transform(columns)?, enc))
}

/// `|x_t - mean(x over the trailing window ending at t)|`, with the window
/// truncated at the start of the series.
pub fn rolling_deviation(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("rolling window must be at least 1".into()));
    }
    Ok((0..series.len())
        .map(|t| {
            let win = &series[(t + 1).saturating_sub(window)..=t];
            let mean = win.iter().sum::<f64>() / win.len() as f64;
            (series[t] - mean).abs()
        })
        .collect())
}

/// UTC hour of day (0-23) and day of week (Monday = 0).
pub fn time_features(timestamps: &[i64]) -> (Vec<u8>, Vec<u8>) {
    timestamps
        .iter()
        .map(|&t| {
            let hour = t.rem_euclid(86_400) / 3_600;
            // 1970-01-01 was a Thursday.
            let day = (t.div_euclid(86_400) + 3).rem_euclid(7);
            (hour as u8, day as u8)
        })
        .unzip()
}

/// `sum_c |x_c - mean_c| / max(std_c, eps)` over `flag_columns`. Statistics
/// are fitted on `m` unless supplied.
pub fn tcp_anomaly_score<S: AsRef<str>>(
    m: &FeatureMatrix,
    flag_columns: &[S],
    stats: Option<&ScalerStats>,
) -> Result<(Vec<f64>, ScalerStats)> {
    let flags = m.select_columns(flag_columns)?;
    let stats = fit_or_reuse(&flags, stats)?;
    let scores = (0..flags.n_rows())
        .map(|i| {
            (0..flags.n_cols())
                .filter(|&c| !flags.is_missing(i, c))
                .map(|c| (flags.get(i, c) - stats.mean[c]).abs() / stats.std[c].max(SCORE_EPSILON))
                .sum()
        })
        .collect();
    Ok((scores, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, v: &[Option<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_columns(vec![(name.into(), v.to_vec())]).unwrap()
    }

    #[test]
    fn median_imputation_examples() {
        let m = impute_median(&col("a", &[Some(1.0), Some(2.0), None, Some(100.0)])).unwrap();
        assert_eq!(m.column(0), vec![1.0, 2.0, 2.0, 100.0]);
        assert!(!m.has_missing());

        let m = impute_median(&col(
            "a",
            &[Some(1.0), None, Some(3.0), Some(5.0), None, Some(7.0)],
        ))
        .unwrap();
        assert_eq!(m.column(0), vec![1.0, 4.0, 3.0, 5.0, 4.0, 7.0]);

        let full = col("a", &[Some(3.0), Some(1.0)]);
        assert_eq!(impute_median(&full).unwrap(), full);
    }

    #[test]
    fn all_missing_column_is_named() {
        match impute_median(&col("Heart_Rate", &[None, None])) {
            Err(Error::AllMissing(c)) => assert_eq!(c, "Heart_Rate"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn standard_scale_examples() {
        let (m, s) = standard_scale(&col("a", &[Some(0.0), Some(10.0)]), None).unwrap();
        assert_eq!(m.column(0), vec![-1.0, 1.0]);
        assert_eq!(s.std[0], 5.0);
        let (m, _) = standard_scale(&col("a", &[Some(4.0); 3]), None).unwrap();
        assert_eq!(m.column(0), vec![0.0; 3]);
        // frozen stats: mean stays 5
        let (m, s2) = standard_scale(&col("a", &[Some(100.0), Some(200.0)]), Some(&s)).unwrap();
        assert_eq!(s2.mean[0], 5.0);
        assert_eq!(m.column(0), vec![19.0, 39.0]);
    }

    #[test]
    fn minmax_examples() {
        let (m, s) = minmax_scale(&col("a", &[Some(2.0), Some(4.0), Some(6.0)]), None).unwrap();
        assert_eq!(m.column(0), vec![0.0, 0.5, 1.0]);
        let (m, _) = minmax_scale(&col("a", &[Some(8.0), Some(0.0)]), Some(&s)).unwrap();
        assert_eq!(m.column(0), vec![1.0, 0.0]);
        let (m, _) = minmax_scale(&col("a", &[Some(3.0); 4]), None).unwrap();
        assert_eq!(m.column(0), vec![0.0; 4]);
    }

    #[test]
    fn scaler_rejects_other_columns() {
        let (_, s) = standard_scale(&col("a", &[Some(1.0)]), None).unwrap();
        assert!(standard_scale(&col("b", &[Some(1.0)]), Some(&s)).is_err());
    }

    #[test]
    fn one_hot_examples() {
        let train = ["ECG".to_string(), "SpO2".into(), "ECG".into()];
        let (m, enc) = one_hot_encode(&[("Sensor_Type", &train[..])]).unwrap();
        assert_eq!(m.column_names(), ["Sensor_Type_ECG", "Sensor_Type_SpO2"]);
        assert_eq!(m.row(0), [1.0, 0.0]);
        let unseen = enc.transform(&[("Sensor_Type", &["NIBP"][..])]).unwrap();
        assert_eq!(unseen.row(0), [0.0, 0.0]);
    }

    #[test]
    fn rolling_deviation_examples() {
        assert_eq!(rolling_deviation(&[0.0, 0.0, 0.0, 10.0], 4).unwrap()[3], 7.5);
        assert_eq!(rolling_deviation(&[5.0; 6], 3).unwrap(), vec![0.0; 6]);
        assert_eq!(rolling_deviation(&[42.0, 1.0], 10).unwrap()[0], 0.0);
        assert!(rolling_deviation(&[], 3).unwrap().is_empty());
        assert!(rolling_deviation(&[1.0], 0).is_err());
    }

    #[test]
    fn time_feature_examples() {
        let (h, d) = time_features(&[0, 3600, 86_400, -1]);
        assert_eq!(h, vec![0, 1, 0, 23]);
        assert_eq!(d, vec![3, 3, 4, 2]);
    }

    #[test]
    fn tcp_score_examples() {
        // 80% syn=0, 20% syn=1: mean 0.2, std 0.4
        let syn: Vec<Option<f64>> = (0..10).map(|i| Some(f64::from(u8::from(i < 2)))).collect();
        let m = col("tcp.flags.syn", &syn);
        let (scores, stats) = tcp_anomaly_score(&m, &["tcp.flags.syn"], None).unwrap();
        assert!((stats.mean[0] - 0.2).abs() < 1e-15);
        assert!((stats.std[0] - 0.4).abs() < 1e-15);
        assert!((scores[0] - 2.0).abs() < 1e-12);
        assert!((scores[5] - 0.5).abs() < 1e-12);

        let at_mean = col("tcp.flags.syn", &[Some(0.2)]);
        let (s, _) = tcp_anomaly_score(&at_mean, &["tcp.flags.syn"], Some(&stats)).unwrap();
        assert_eq!(s, vec![0.0]);
        let one_std = col("tcp.flags.syn", &[Some(0.6)]);
        let (s, _) = tcp_anomaly_score(&one_std, &["tcp.flags.syn"], Some(&stats)).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tcp_score_names_missing_flag() {
        let m = col("tcp.flags.syn", &[Some(0.0)]);
        match tcp_anomaly_score(&m, &["tcp.flags.ack"], None) {
            Err(Error::UnknownColumn(c)) => assert_eq!(c, "tcp.flags.ack"),
            other => panic!("{other:?}"),
        }
    }
}
