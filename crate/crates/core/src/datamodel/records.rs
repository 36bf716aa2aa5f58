use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Which of the two detection problems a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Faulty medical-device readings.
    Device,
    /// Network attacks against the monitoring infrastructure.
    Cyber,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Device => f.write_str("device"),
            Task::Cyber => f.write_str("cyber"),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "device" => Ok(Task::Device),
            "cyber" | "attack" => Ok(Task::Cyber),
            other => Err(crate::error::Error::InvalidArgument(format!(
                "unknown task `{other}` (expected device or cyber)"
            ))),
        }
    }
}

/// One timestamped vital-signs reading from a patient-monitoring sensor.
///
/// `None` marks a missing numeric cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub patient_id: String,
    /// Seconds since the Unix epoch (UTC).
    pub timestamp: i64,
    pub sensor_id: String,
    pub sensor_type: String,
    /// Degrees Celsius.
    pub temperature: Option<f64>,
    /// mmHg.
    pub systolic_bp: Option<f64>,
    /// mmHg.
    pub diastolic_bp: Option<f64>,
    /// Beats per minute.
    pub heart_rate: Option<f64>,
    /// Percent, in `[0, 100]`.
    pub battery_level: Option<f64>,
    pub target_blood_pressure: Option<f64>,
    pub target_heart_rate: Option<f64>,
    pub target_health_status: String,
    /// 0 = normal, 1 = faulty.
    pub label: u8,
}

impl DeviceRecord {
    /// Checks the record-level invariants, returning the offending field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if let Some(b) = self.battery_level {
            if !(0.0..=100.0).contains(&b) {
                return Err(("battery_level", format!("{b} outside [0, 100]")));
            }
        }
        if self.label > 1 {
            return Err(("label", format!("{} is not binary", self.label)));
        }
        Ok(())
    }

    /// Ordering key used after ingestion: (patient, sensor, timestamp).
    pub fn stream_order(&self, other: &Self) -> std::cmp::Ordering {
        (&self.patient_id, &self.sensor_id, self.timestamp).cmp(&(
            &other.patient_id,
            &other.sensor_id,
            other.timestamp,
        ))
    }
}

/// Side-map columns computed from string fields rather than read from input.
pub const DERIVED_NET_COLUMNS: [&str; 2] = ["mqtt.topic_len", "mqtt.clientid_len"];

/// One network-traffic observation with TCP/MQTT protocol fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetRecord {
    pub frame_time_delta: Option<f64>,
    pub frame_time_relative: Option<f64>,
    pub frame_len: Option<f64>,
    pub ip_src: String,
    pub ip_dst: String,
    pub tcp_srcport: Option<u16>,
    pub tcp_dstport: Option<u16>,
    pub tcp_flags_ack: Option<u8>,
    pub tcp_flags_fin: Option<u8>,
    pub tcp_flags_push: Option<u8>,
    pub tcp_flags_reset: Option<u8>,
    pub tcp_flags_syn: Option<u8>,
    pub mqtt_msgtype: Option<u8>,
    pub mqtt_qos: Option<u8>,
    pub mqtt_retain: Option<u8>,
    pub mqtt_topic: String,
    pub mqtt_clientid: String,
    /// Numeric columns outside the fixed schema, keyed by their CSV spelling.
    pub extra: BTreeMap<String, Option<f64>>,
    /// 0 = normal, 1 = attack.
    pub label: u8,
}

impl NetRecord {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let flags = [
            ("tcp.flags.ack", self.tcp_flags_ack),
            ("tcp.flags.fin", self.tcp_flags_fin),
            ("tcp.flags.push", self.tcp_flags_push),
            ("tcp.flags.reset", self.tcp_flags_reset),
            ("tcp.flags.syn", self.tcp_flags_syn),
            ("mqtt.retain", self.mqtt_retain),
        ];
        for (name, v) in flags {
            if let Some(v) = v {
                if v > 1 {
                    return Err((name, format!("flag value {v} is not binary")));
                }
            }
        }
        if let Some(q) = self.mqtt_qos {
            if q > 2 {
                return Err(("mqtt.qos", format!("qos {q} not in {{0,1,2}}")));
            }
        }
        if let Some(len) = self.frame_len {
            if len < 0.0 {
                return Err(("frame.len", format!("negative length {len}")));
            }
        }
        if let Some(d) = self.frame_time_delta {
            if d < 0.0 {
                return Err(("frame.time_delta", format!("negative delta {d}")));
            }
        }
        if self.label > 1 {
            return Err(("label", format!("{} is not binary", self.label)));
        }
        Ok(())
    }

    /// Recomputes the string-length side columns from `mqtt_topic` and
    /// `mqtt_clientid`.
    pub fn refresh_derived(&mut self) {
        self.extra.insert(
            DERIVED_NET_COLUMNS[0].to_string(),
            Some(self.mqtt_topic.chars().count() as f64),
        );
        self.extra.insert(
            DERIVED_NET_COLUMNS[1].to_string(),
            Some(self.mqtt_clientid.chars().count() as f64),
        );
    }
}
