use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use super::{ParseReport, Parsed};
use crate::datamodel::{DeviceRecord, NetRecord, DERIVED_NET_COLUMNS};
use crate::error::{Error, Result};

/// Device-data header, in output order (the label column is appended).
pub const DEVICE_COLUMNS: [&str; 12] = [
    "Patient_ID",
    "Timestamp",
    "Sensor_ID",
    "Sensor_Type",
    "Temperature",
    "Systolic_BP",
    "Diastolic_BP",
    "Heart_Rate",
    "Battery_Level",
    "Target_Blood_Pressure",
    "Target_Heart_Rate",
    "Target_Health_Status",
];

/// Alternative spellings accepted for device columns.
const DEVICE_ALIASES: [(&str, &str); 6] = [
    ("Patient ID", "Patient_ID"),
    ("Sensor ID", "Sensor_ID"),
    ("Sensor Type", "Sensor_Type"),
    ("Device_Battery_Level", "Battery_Level"),
    ("Temperature (°C)", "Temperature"),
    ("Heart_Rate (bpm)", "Heart_Rate"),
];

/// Attack-data fixed columns, in output order. Any further numeric columns
/// land in [`NetRecord::extra`].
pub const ATTACK_COLUMNS: [&str; 17] = [
    "frame.time_delta",
    "frame.time_relative",
    "frame.len",
    "ip.src",
    "ip.dst",
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
    "mqtt.topic",
    "mqtt.clientid",
];

/// Parses a numeric cell. Accepts decimal and `0x` hexadecimal; blank,
/// non-finite and unparseable cells are `None`.
fn parse_number(cell: &str) -> Option<f64> {
    let s = cell.trim();
    if s.is_empty() {
        return None;
    }
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        return u64::from_str_radix(hex, 16).ok().map(|v| v as f64);
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_timestamp(cell: &str) -> Option<i64> {
    let s = cell.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then(|| v.floor() as i64);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

fn parse_label(cell: &str) -> Option<u8> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "0" | "0.0" | "false" | "normal" => Some(0),
        "1" | "1.0" | "true" | "anomaly" | "attack" | "faulty" => Some(1),
        _ => None,
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut raw = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.trim().is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(raw.as_bytes());
    let headers = reader
        .headers()?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Table { headers, rows })
}

/// Resolves column positions, reporting the first absent required column.
struct Columns<'a> {
    path: &'a Path,
    index: BTreeMap<String, usize>,
}

impl<'a> Columns<'a> {
    fn new(path: &'a Path, headers: &[String], aliases: &[(&str, &str)]) -> Self {
        let mut index = BTreeMap::new();
        for (i, h) in headers.iter().enumerate() {
            let canonical = aliases
                .iter()
                .find(|(alias, _)| alias == h)
                .map_or(h.as_str(), |(_, c)| c);
            index.entry(canonical.to_string()).or_insert(i);
        }
        Self { path, index }
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::Schema {
            path: self.path.to_path_buf(),
            column: name.to_string(),
        })
    }
}

struct RowContext<'a> {
    path: &'a Path,
    row: usize,
    record: &'a csv::StringRecord,
    report: &'a mut ParseReport,
}

impl RowContext<'_> {
    fn cell(&self, idx: usize) -> &str {
        self.record.get(idx).unwrap_or("")
    }

    fn number(&mut self, idx: usize, column: &str) -> Option<f64> {
        let v = parse_number(self.cell(idx));
        if v.is_none() {
            self.report.missing_cells += 1;
            *self
                .report
                .missing_by_column
                .entry(column.to_string())
                .or_default() += 1;
        }
        v
    }

    fn invalid(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Validation {
            path: self.path.to_path_buf(),
            row: self.row,
            column: column.to_string(),
            message: message.into(),
        }
    }

    /// Integer-valued cell that must fit in `0..=max`.
    fn integer(&mut self, idx: usize, column: &str, max: f64) -> Result<Option<f64>> {
        match self.number(idx, column) {
            None => Ok(None),
            Some(v) if v.fract() == 0.0 && (0.0..=max).contains(&v) => Ok(Some(v)),
            Some(v) => Err(self.invalid(column, format!("{v} is not an integer in [0, {max}]"))),
        }
    }

    fn label(&self, idx: usize, column: &str) -> Result<u8> {
        parse_label(self.cell(idx))
            .ok_or_else(|| self.invalid(column, format!("label `{}` is not binary", self.cell(idx))))
    }
}

/// Parses device readings and sorts them by (patient, sensor, timestamp).
pub fn parse_device_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Parsed<DeviceRecord>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let cols = Columns::new(path, &table.headers, &DEVICE_ALIASES);
    let idx: Vec<usize> = DEVICE_COLUMNS
        .iter()
        .map(|c| cols.require(c))
        .collect::<Result<_>>()?;
    let label_idx = cols.require(label_column)?;

    let mut report = ParseReport::default();
    let mut records = Vec::with_capacity(table.rows.len());
    for (r, row) in table.rows.iter().enumerate() {
        let mut ctx = RowContext {
            path,
            row: r + 1,
            record: row,
            report: &mut report,
        };
        let timestamp = parse_timestamp(ctx.cell(idx[1]))
            .ok_or_else(|| ctx.invalid("Timestamp", format!("unparseable `{}`", ctx.cell(idx[1]))))?;
        let record = DeviceRecord {
            patient_id: ctx.cell(idx[0]).trim().to_string(),
            timestamp,
            sensor_id: ctx.cell(idx[2]).trim().to_string(),
            sensor_type: ctx.cell(idx[3]).trim().to_string(),
            temperature: ctx.number(idx[4], DEVICE_COLUMNS[4]),
            systolic_bp: ctx.number(idx[5], DEVICE_COLUMNS[5]),
            diastolic_bp: ctx.number(idx[6], DEVICE_COLUMNS[6]),
            heart_rate: ctx.number(idx[7], DEVICE_COLUMNS[7]),
            battery_level: ctx.number(idx[8], DEVICE_COLUMNS[8]),
            target_blood_pressure: ctx.number(idx[9], DEVICE_COLUMNS[9]),
            target_heart_rate: ctx.number(idx[10], DEVICE_COLUMNS[10]),
            target_health_status: ctx.cell(idx[11]).trim().to_string(),
            label: ctx.label(label_idx, label_column)?,
        };
        if let Err((field, msg)) = record.validate() {
            return Err(ctx.invalid(field, msg));
        }
        records.push(record);
    }
    records.sort_by(|a, b| a.stream_order(b));
    Ok(Parsed { records, report })
}

/// Parses network observations. Unknown all-numeric columns become side-map
/// features; unknown non-numeric columns are skipped and reported. Records
/// are sorted by `frame.time_relative` (stable, missing last).
pub fn parse_attack_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Parsed<NetRecord>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let cols = Columns::new(path, &table.headers, &[]);
    let idx: Vec<usize> = ATTACK_COLUMNS
        .iter()
        .map(|c| cols.require(c))
        .collect::<Result<_>>()?;
    let label_idx = cols.require(label_column)?;

    let mut report = ParseReport::default();
    let mut extras = Vec::new();
    for (name, &i) in &cols.index {
        if idx.contains(&i) || i == label_idx {
            continue;
        }
        let numeric = table.rows.iter().all(|row| {
            let cell = row.get(i).unwrap_or("").trim();
            cell.is_empty() || parse_number(cell).is_some()
        });
        if numeric {
            extras.push((name.clone(), i));
        } else {
            report.skipped_columns.push(name.clone());
        }
    }

    let mut records = Vec::with_capacity(table.rows.len());
    for (r, row) in table.rows.iter().enumerate() {
        let mut ctx = RowContext {
            path,
            row: r + 1,
            record: row,
            report: &mut report,
        };
        let c = &ATTACK_COLUMNS;
        let byte = |ctx: &mut RowContext, k: usize| -> Result<Option<u8>> {
            Ok(ctx.integer(idx[k], c[k], 255.0)?.map(|v| v as u8))
        };
        let port = |ctx: &mut RowContext, k: usize| -> Result<Option<u16>> {
            Ok(ctx.integer(idx[k], c[k], 65535.0)?.map(|v| v as u16))
        };
        let mut extra = BTreeMap::new();
        for (name, i) in &extras {
            extra.insert(name.clone(), ctx.number(*i, name));
        }
        let mut record = NetRecord {
            frame_time_delta: ctx.number(idx[0], c[0]),
            frame_time_relative: ctx.number(idx[1], c[1]),
            frame_len: ctx.number(idx[2], c[2]),
            ip_src: ctx.cell(idx[3]).trim().to_string(),
            ip_dst: ctx.cell(idx[4]).trim().to_string(),
            tcp_srcport: port(&mut ctx, 5)?,
            tcp_dstport: port(&mut ctx, 6)?,
            tcp_flags_ack: byte(&mut ctx, 7)?,
            tcp_flags_fin: byte(&mut ctx, 8)?,
            tcp_flags_push: byte(&mut ctx, 9)?,
            tcp_flags_reset: byte(&mut ctx, 10)?,
            tcp_flags_syn: byte(&mut ctx, 11)?,
            mqtt_msgtype: byte(&mut ctx, 12)?,
            mqtt_qos: byte(&mut ctx, 13)?,
            mqtt_retain: byte(&mut ctx, 14)?,
            mqtt_topic: ctx.cell(idx[15]).to_string(),
            mqtt_clientid: ctx.cell(idx[16]).to_string(),
            extra,
            label: ctx.label(label_idx, label_column)?,
        };
        record.refresh_derived();
        if let Err((field, msg)) = record.validate() {
            return Err(ctx.invalid(field, msg));
        }
        records.push(record);
    }
    records.sort_by(|a, b| {
        let key = |r: &NetRecord| r.frame_time_relative.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b))
    });
    Ok(Parsed { records, report })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn fmt_int<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

pub fn write_device_csv(
    path: impl AsRef<Path>,
    records: &[DeviceRecord],
    label_column: &str,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut header: Vec<&str> = DEVICE_COLUMNS.to_vec();
    header.push(label_column);
    w.write_record(&header)?;
    for r in records {
        w.write_record([
            r.patient_id.clone(),
            r.timestamp.to_string(),
            r.sensor_id.clone(),
            r.sensor_type.clone(),
            fmt_opt(r.temperature),
            fmt_opt(r.systolic_bp),
            fmt_opt(r.diastolic_bp),
            fmt_opt(r.heart_rate),
            fmt_opt(r.battery_level),
            fmt_opt(r.target_blood_pressure),
            fmt_opt(r.target_heart_rate),
            r.target_health_status.clone(),
            r.label.to_string(),
        ])?;
    }
    finish(path, w)
}

/// Writes attack records. Side-map columns (except the derived string
/// lengths) follow the fixed columns in lexicographic order.
pub fn write_attack_csv(
    path: impl AsRef<Path>,
    records: &[NetRecord],
    label_column: &str,
) -> Result<()> {
    let path = path.as_ref();
    let mut extra_cols: Vec<&str> = records
        .iter()
        .flat_map(|r| r.extra.keys().map(String::as_str))
        .filter(|k| !DERIVED_NET_COLUMNS.contains(k))
        .collect();
    extra_cols.sort_unstable();
    extra_cols.dedup();

    let mut w = create(path)?;
    let mut header: Vec<&str> = ATTACK_COLUMNS.to_vec();
    header.extend(&extra_cols);
    header.push(label_column);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            fmt_opt(r.frame_time_delta),
            fmt_opt(r.frame_time_relative),
            fmt_opt(r.frame_len),
            r.ip_src.clone(),
            r.ip_dst.clone(),
            fmt_int(r.tcp_srcport),
            fmt_int(r.tcp_dstport),
            fmt_int(r.tcp_flags_ack),
            fmt_int(r.tcp_flags_fin),
            fmt_int(r.tcp_flags_push),
            fmt_int(r.tcp_flags_reset),
            fmt_int(r.tcp_flags_syn),
            fmt_int(r.mqtt_msgtype),
            fmt_int(r.mqtt_qos),
            fmt_int(r.mqtt_retain),
            r.mqtt_topic.clone(),
            r.mqtt_clientid.clone(),
        ];
        for c in &extra_cols {
            row.push(fmt_opt(r.extra.get(*c).copied().flatten()));
        }
        row.push(r.label.to_string());
        w.write_record(&row)?;
    }
    finish(path, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const DEVICE_HEADER: &str = "Patient_ID,Timestamp,Sensor_ID,Sensor_Type,Temperature,Systolic_BP,Diastolic_BP,Heart_Rate,Battery_Level,Target_Blood_Pressure,Target_Heart_Rate,Target_Health_Status,label\n";

    #[test]
    fn blank_cell_becomes_missing_and_is_counted() {
        let f = file_with(&format!(
            "{DEVICE_HEADER}P1,100,S1,ECG,36.9,120,80,75,90,120,75,Stable,0\n\
             P1,160,S1,ECG,,121,81,76,89,120,75,Stable,0\n\
             P1,220,S1,ECG,37.0,119,79,74,88,120,75,Stable,1\n"
        ));
        let parsed = parse_device_csv(f.path(), "label").unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert_eq!(parsed.report.missing_cells, 1);
        assert_eq!(parsed.report.missing_by_column["Temperature"], 1);
        assert_eq!(parsed.records[1].temperature, None);
        assert_eq!(parsed.records[2].label, 1);
    }

    #[test]
    fn missing_header_names_the_column() {
        let header = DEVICE_HEADER.replace(",Heart_Rate,", ",");
        let f = file_with(&format!("{header}P1,100,S1,ECG,36.9,120,80,90,120,75,Stable,0\n"));
        match parse_device_csv(f.path(), "label") {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "Heart_Rate"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_distinct_error() {
        let f = file_with("");
        assert!(matches!(parse_device_csv(f.path(), "label"), Err(Error::EmptyFile { .. })));
    }

    #[test]
    fn shuffled_timestamps_are_sorted_per_stream() {
        let f = file_with(&format!(
            "{DEVICE_HEADER}P1,300,S1,ECG,36.9,120,80,75,90,120,75,Stable,0\n\
             P2,50,S9,ECG,36.9,120,80,75,90,120,75,Stable,0\n\
             P1,100,S1,ECG,36.9,120,80,75,90,120,75,Stable,0\n\
             P1,200,S1,ECG,36.9,120,80,75,90,120,75,Stable,0\n"
        ));
        let recs = parse_device_csv(f.path(), "label").unwrap().records;
        let ts: Vec<i64> = recs.iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![100, 200, 300, 50]);
    }

    #[test]
    fn accepts_datetime_timestamps_and_aliases() {
        let header = DEVICE_HEADER
            .replace("Battery_Level", "Device_Battery_Level")
            .replace("Patient_ID", "Patient ID");
        let f = file_with(&format!(
            "{header}P1,1970-01-02 00:00:00,S1,ECG,36.9,120,80,75,90,120,75,Stable,0\n"
        ));
        let recs = parse_device_csv(f.path(), "label").unwrap().records;
        assert_eq!(recs[0].timestamp, 86_400);
        assert_eq!(recs[0].battery_level, Some(90.0));
    }

    #[test]
    fn battery_out_of_range_is_rejected() {
        let f = file_with(&format!(
            "{DEVICE_HEADER}P1,100,S1,ECG,36.9,120,80,75,140,120,75,Stable,0\n"
        ));
        assert!(matches!(
            parse_device_csv(f.path(), "label"),
            Err(Error::Validation { ref column, .. }) if column == "battery_level"
        ));
    }

    #[test]
    fn configurable_label_column() {
        let header = DEVICE_HEADER.replace(",label", ",Is_Faulty");
        let f = file_with(&format!(
            "{header}P1,100,S1,ECG,36.9,120,80,75,90,120,75,Stable,1\n"
        ));
        assert!(parse_device_csv(f.path(), "label").is_err());
        assert_eq!(parse_device_csv(f.path(), "Is_Faulty").unwrap().records[0].label, 1);
    }

    const ATTACK_HEADER: &str = "frame.time_delta,frame.time_relative,frame.len,ip.src,ip.dst,tcp.srcport,tcp.dstport,tcp.flags.ack,tcp.flags.fin,tcp.flags.push,tcp.flags.reset,tcp.flags.syn,mqtt.msgtype,mqtt.qos,mqtt.retain,mqtt.topic,mqtt.clientid";

    #[test]
    fn attack_row_parses_flags_lengths_and_side_columns() {
        let f = file_with(&format!(
            "{ATTACK_HEADER},ip.ttl,tcp.flags,frame.time,label\n\
             0.01,1.5,90,10.0.0.1,10.0.0.2,50000,1883,1,0,1,0,1,3,0,0,icu/bed1/hr,bed1,64,0x018,Jan 1,0\n"
        ));
        let parsed = parse_attack_csv(f.path(), "label").unwrap();
        let r = &parsed.records[0];
        assert_eq!(r.tcp_flags_syn, Some(1));
        assert_eq!(r.extra["mqtt.topic_len"], Some(11.0));
        assert_eq!(r.extra["mqtt.clientid_len"], Some(4.0));
        assert_eq!(r.extra["ip.ttl"], Some(64.0));
        assert_eq!(r.extra["tcp.flags"], Some(24.0));
        assert_eq!(parsed.report.skipped_columns, vec!["frame.time".to_string()]);
    }

    #[test]
    fn non_binary_flag_is_a_validation_error() {
        let f = file_with(&format!(
            "{ATTACK_HEADER},label\n0.01,1.5,90,a,b,50000,1883,1,0,1,0,2,3,0,0,t,c,0\n"
        ));
        match parse_attack_csv(f.path(), "label") {
            Err(Error::Validation { column, .. }) => assert_eq!(column, "tcp.flags.syn"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_numeric_is_missing_not_fatal() {
        let f = file_with(&format!(
            "{ATTACK_HEADER},label\nabc,1.5,90,a,b,50000,1883,1,0,1,0,0,3,0,0,t,c,0\n"
        ));
        let parsed = parse_attack_csv(f.path(), "label").unwrap();
        assert_eq!(parsed.records[0].frame_time_delta, None);
        assert_eq!(parsed.report.missing_cells, 1);
    }
}
