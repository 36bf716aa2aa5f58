use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    rolling_deviation, tcp_anomaly_score, time_features, MedianImputer, OneHotEncoder,
    ScalerStats, TCP_SCORE_COLUMN, TCP_SCORE_FLAGS,
};
use crate::datamodel::{DeviceRecord, FeatureMatrix, NetRecord, Task};
use crate::error::{Error, Result};

/// Raw numeric device columns, imputed before feature engineering.
pub const DEVICE_NUMERIC_COLUMNS: [&str; 7] = [
    "Temperature",
    "Systolic_BP",
    "Diastolic_BP",
    "Heart_Rate",
    "Battery_Level",
    "Target_Blood_Pressure",
    "Target_Heart_Rate",
];

/// Fixed numeric network columns; side-map columns follow them.
pub const NET_NUMERIC_COLUMNS: [&str; 13] = [
    "frame.time_delta",
    "frame.time_relative",
    "frame.len",
    "tcp.srcport",
    "tcp.dstport",
    "tcp.flags.ack",
    "tcp.flags.fin",
    "tcp.flags.push",
    "tcp.flags.reset",
    "tcp.flags.syn",
    "mqtt.msgtype",
    "mqtt.qos",
    "mqtt.retain",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Trailing window (records per stream) for HRD and BPD.
    pub rolling_window: usize,
    /// Hour-of-day and day-of-week columns (device task).
    pub time_features: bool,
    /// `tcp_anomaly_score` column (cyber task).
    pub tcp_anomaly_score: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            rolling_window: 10,
            time_features: true,
            tcp_anomaly_score: true,
        }
    }
}

/// Labelled records of either task.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Device(Vec<DeviceRecord>),
    Cyber(Vec<NetRecord>),
}

impl Dataset {
    pub fn task(&self) -> Task {
        match self {
            Dataset::Device(_) => Task::Device,
            Dataset::Cyber(_) => Task::Cyber,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Device(r) => r.len(),
            Dataset::Cyber(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<u8> {
        match self {
            Dataset::Device(r) => r.iter().map(|r| r.label).collect(),
            Dataset::Cyber(r) => r.iter().map(|r| r.label).collect(),
        }
    }
}

/// Fitted preprocessing: imputation medians, category vocabularies and
/// TCP-score statistics, all learned from training rows. Produces the
/// unscaled, fully imputed feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub task: Task,
    pub config: FeatureConfig,
    pub imputer: MedianImputer,
    pub encoder: OneHotEncoder,
    pub tcp_stats: Option<ScalerStats>,
}

impl Preprocessor {
    pub fn fit(data: &Dataset, train_rows: &[usize], config: &FeatureConfig) -> Result<Self> {
        if config.rolling_window == 0 {
            return Err(Error::Config("rolling_window must be at least 1".into()));
        }
        match data {
            Dataset::Device(records) => {
                let train: Vec<&DeviceRecord> = train_rows.iter().map(|&i| &records[i]).collect();
                let imputer = MedianImputer::fit(&device_numeric(&train)?)?;
                let (sensor, status) = device_categories(&train);
                let encoder = OneHotEncoder::fit(&[
                    ("Sensor_Type", &sensor[..]),
                    ("Target_Health_Status", &status[..]),
                ]);
                Ok(Self {
                    task: Task::Device,
                    config: config.clone(),
                    imputer,
                    encoder,
                    tcp_stats: None,
                })
            }
            Dataset::Cyber(records) => {
                let train: Vec<&NetRecord> = train_rows.iter().map(|&i| &records[i]).collect();
                let extras: BTreeSet<&str> = train
                    .iter()
                    .flat_map(|r| r.extra.keys().map(String::as_str))
                    .collect();
                let extras: Vec<&str> = extras.into_iter().collect();
                let raw = net_numeric(&train, &extras)?;
                let imputer = MedianImputer::fit(&raw)?;
                let (src, dst) = net_categories(&train);
                let encoder =
                    OneHotEncoder::fit(&[("ip.src", &src[..]), ("ip.dst", &dst[..])]);
                let tcp_stats = if config.tcp_anomaly_score {
                    let imputed = imputer.transform(&raw)?;
                    Some(tcp_anomaly_score(&imputed, &TCP_SCORE_FLAGS, None)?.1)
                } else {
                    None
                };
                Ok(Self {
                    task: Task::Cyber,
                    config: config.clone(),
                    imputer,
                    encoder,
                    tcp_stats,
                })
            }
        }
    }

    /// Feature matrix for every record of `data`.
    pub fn transform(&self, data: &Dataset) -> Result<FeatureMatrix> {
        if data.task() != self.task {
            return Err(Error::InvalidArgument(format!(
                "preprocessor fitted for the {} task, got {} data",
                self.task,
                data.task()
            )));
        }
        match data {
            Dataset::Device(records) => self.transform_device(records),
            Dataset::Cyber(records) => self.transform_cyber(records),
        }
    }

    fn transform_device(&self, records: &[DeviceRecord]) -> Result<FeatureMatrix> {
        let refs: Vec<&DeviceRecord> = records.iter().collect();
        let mut m = self.imputer.transform(&device_numeric(&refs)?)?;

        // Rolling deviations per (patient, sensor) stream in time order.
        let mut streams: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            streams
                .entry((r.patient_id.as_str(), r.sensor_id.as_str()))
                .or_default()
                .push(i);
        }
        for (source, name) in [
            ("Heart_Rate", "HRD"),
            ("Systolic_BP", "BPD_Systolic"),
            ("Diastolic_BP", "BPD_Diastolic"),
        ] {
            let values = m.column_by_name(source)?;
            let mut dev = vec![0.0; records.len()];
            for rows in streams.values() {
                let mut rows = rows.clone();
                rows.sort_by_key(|&i| records[i].timestamp);
                let series: Vec<f64> = rows.iter().map(|&i| values[i]).collect();
                for (&i, d) in rows.iter().zip(rolling_deviation(&series, self.config.rolling_window)?) {
                    dev[i] = d;
                }
            }
            m = m.push_column(name, &dev)?;
        }

        if self.config.time_features {
            let ts: Vec<i64> = records.iter().map(|r| r.timestamp).collect();
            let (hour, day) = time_features(&ts);
            let hour: Vec<f64> = hour.into_iter().map(f64::from).collect();
            let day: Vec<f64> = day.into_iter().map(f64::from).collect();
            m = m.push_column("hour_of_day", &hour)?.push_column("day_of_week", &day)?;
        }

        let (sensor, status) = device_categories(&refs);
        let onehot = self.encoder.transform(&[
            ("Sensor_Type", &sensor[..]),
            ("Target_Health_Status", &status[..]),
        ])?;
        m.hstack(&onehot)
    }

    fn transform_cyber(&self, records: &[NetRecord]) -> Result<FeatureMatrix> {
        let refs: Vec<&NetRecord> = records.iter().collect();
        let extras: Vec<&str> = self.imputer.columns[NET_NUMERIC_COLUMNS.len()..]
            .iter()
            .map(String::as_str)
            .collect();
        let mut m = self.imputer.transform(&net_numeric(&refs, &extras)?)?;
        if let Some(stats) = &self.tcp_stats {
            let (score, _) = tcp_anomaly_score(&m, &TCP_SCORE_FLAGS, Some(stats))?;
            m = m.push_column(TCP_SCORE_COLUMN, &score)?;
        }
        let (src, dst) = net_categories(&refs);
        let onehot = self
            .encoder
            .transform(&[("ip.src", &src[..]), ("ip.dst", &dst[..])])?;
        m.hstack(&onehot)
    }
}

fn device_numeric(records: &[&DeviceRecord]) -> Result<FeatureMatrix> {
    let get: [fn(&DeviceRecord) -> Option<f64>; 7] = [
        |r| r.temperature,
        |r| r.systolic_bp,
        |r| r.diastolic_bp,
        |r| r.heart_rate,
        |r| r.battery_level,
        |r| r.target_blood_pressure,
        |r| r.target_heart_rate,
    ];
    FeatureMatrix::from_columns(
        DEVICE_NUMERIC_COLUMNS
            .iter()
            .zip(get)
            .map(|(name, f)| (name.to_string(), records.iter().map(|r| f(r)).collect()))
            .collect(),
    )
}

fn device_categories(records: &[&DeviceRecord]) -> (Vec<String>, Vec<String>) {
    records
        .iter()
        .map(|r| (r.sensor_type.clone(), r.target_health_status.clone()))
        .unzip()
}

fn net_numeric(records: &[&NetRecord], extras: &[&str]) -> Result<FeatureMatrix> {
    let get: [fn(&NetRecord) -> Option<f64>; 13] = [
        |r| r.frame_time_delta,
        |r| r.frame_time_relative,
        |r| r.frame_len,
        |r| r.tcp_srcport.map(f64::from),
        |r| r.tcp_dstport.map(f64::from),
        |r| r.tcp_flags_ack.map(f64::from),
        |r| r.tcp_flags_fin.map(f64::from),
        |r| r.tcp_flags_push.map(f64::from),
        |r| r.tcp_flags_reset.map(f64::from),
        |r| r.tcp_flags_syn.map(f64::from),
        |r| r.mqtt_msgtype.map(f64::from),
        |r| r.mqtt_qos.map(f64::from),
        |r| r.mqtt_retain.map(f64::from),
    ];
    let mut columns: Vec<(String, Vec<Option<f64>>)> = NET_NUMERIC_COLUMNS
        .iter()
        .zip(get)
        .map(|(name, f)| (name.to_string(), records.iter().map(|r| f(r)).collect()))
        .collect();
    for &name in extras {
        columns.push((
            name.to_string(),
            records
                .iter()
                .map(|r| r.extra.get(name).copied().flatten())
                .collect(),
        ));
    }
    FeatureMatrix::from_columns(columns)
}

fn net_categories(records: &[&NetRecord]) -> (Vec<String>, Vec<String>) {
    records
        .iter()
        .map(|r| (r.ip_src.clone(), r.ip_dst.clone()))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_attack_data, generate_device_data, GenConfig};

    #[test]
    fn device_features_are_complete_and_named() {
        let recs = generate_device_data(&GenConfig::new(900, 0.2, 3)).unwrap();
        let data = Dataset::Device(recs);
        let train: Vec<usize> = (0..600).collect();
        let pre = Preprocessor::fit(&data, &train, &FeatureConfig::default()).unwrap();
        let m = pre.transform(&data).unwrap();
        assert_eq!(m.n_rows(), 900);
        assert!(!m.has_missing());
        for name in ["Temperature", "HRD", "BPD_Systolic", "BPD_Diastolic", "hour_of_day", "day_of_week"] {
            m.column_index(name).unwrap();
        }
        assert!(m.column_names().iter().any(|c| c.starts_with("Sensor_Type_")));
        assert!(!m.column_names().iter().any(|c| c == "label"));
    }

    #[test]
    fn cyber_features_include_side_columns_and_score() {
        let recs = generate_attack_data(&GenConfig::new(2000, 0.1, 3)).unwrap();
        let data = Dataset::Cyber(recs);
        let train: Vec<usize> = (0..2000).collect();
        let pre = Preprocessor::fit(&data, &train, &FeatureConfig::default()).unwrap();
        let m = pre.transform(&data).unwrap();
        assert!(!m.has_missing());
        for name in ["tcp.flags.syn", "mqtt.topic_len", "ip.ttl", TCP_SCORE_COLUMN, "ip.src_10.0.0.66"] {
            m.column_index(name).unwrap();
        }
    }

    #[test]
    fn task_mismatch_is_rejected() {
        let dev = Dataset::Device(generate_device_data(&GenConfig::new(100, 0.2, 1)).unwrap());
        let net = Dataset::Cyber(generate_attack_data(&GenConfig::new(100, 0.2, 1)).unwrap());
        let pre = Preprocessor::fit(&dev, &[0, 1, 2, 3], &FeatureConfig::default()).unwrap();
        assert!(pre.transform(&net).is_err());
    }
}
