//! Deterministic synthetic device and network datasets.
//!
//! Both generators are pure functions of their [`GenConfig`]. The number of
//! anomalous records is exactly `round(anomaly_rate * n_records)`; which
//! records are anomalous and which fault or attack each realises is drawn
//! from the seeded generator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{DeviceRecord, NetRecord};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Mean and standard deviation of a normally distributed vital sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vital {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VitalBaselines {
    pub temperature: Vital,
    pub heart_rate: Vital,
    pub systolic_bp: Vital,
    pub diastolic_bp: Vital,
    /// Battery level at the first reading of a stream (percent).
    pub battery_start: f64,
    /// Battery level at the last reading of a stream (percent).
    pub battery_end: f64,
}

impl Default for VitalBaselines {
    fn default() -> Self {
        Self {
            temperature: Vital { mean: 36.8, std: 0.4 },
            heart_rate: Vital { mean: 75.0, std: 8.0 },
            systolic_bp: Vital { mean: 120.0, std: 10.0 },
            diastolic_bp: Vital { mean: 80.0, std: 7.0 },
            battery_start: 100.0,
            battery_end: 20.0,
        }
    }
}

/// Relative weights of the device fault kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultMix {
    pub temperature_spike: f64,
    pub battery_collapse: f64,
    pub frozen_reading: f64,
    pub erroneous_value: f64,
}

impl Default for FaultMix {
    fn default() -> Self {
        Self {
            temperature_spike: 0.4,
            battery_collapse: 0.15,
            frozen_reading: 0.05,
            erroneous_value: 0.4,
        }
    }
}

impl FaultMix {
    fn weights(&self) -> [f64; 4] {
        [
            self.temperature_spike,
            self.battery_collapse,
            self.frozen_reading,
            self.erroneous_value,
        ]
    }
}

/// Relative weights of the attack kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackMix {
    pub syn_burst: f64,
    pub reset_storm: f64,
    pub mqtt_exploit: f64,
}

impl Default for AttackMix {
    fn default() -> Self {
        Self {
            syn_burst: 0.4,
            reset_storm: 0.3,
            mqtt_exploit: 0.3,
        }
    }
}

impl AttackMix {
    fn weights(&self) -> [f64; 3] {
        [self.syn_burst, self.reset_storm, self.mqtt_exploit]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_records: usize,
    /// Fraction of anomalous records, in `(0, 0.5]`.
    pub anomaly_rate: f64,
    pub n_patients: usize,
    pub n_sensors_per_patient: usize,
    pub fault_mix: FaultMix,
    pub attack_mix: AttackMix,
    pub baselines: VitalBaselines,
    /// Probability that a numeric cell of a normal record is blanked.
    pub missing_rate: f64,
    /// Epoch seconds of the first device reading.
    pub start_epoch: i64,
    /// Seconds between consecutive readings of one stream.
    pub interval_seconds: i64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_records: 100_000,
            anomaly_rate: 0.2,
            n_patients: 2,
            n_sensors_per_patient: 9,
            fault_mix: FaultMix::default(),
            attack_mix: AttackMix::default(),
            baselines: VitalBaselines::default(),
            missing_rate: 0.001,
            // 2024-01-01T00:00:00Z
            start_epoch: 1_704_067_200,
            interval_seconds: 60,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn new(n_records: usize, anomaly_rate: f64, seed: u64) -> Self {
        Self {
            n_records,
            anomaly_rate,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.anomaly_rate > 0.0 && self.anomaly_rate <= 0.5) {
            return Err(Error::Config(format!(
                "anomaly_rate {} outside (0, 0.5]",
                self.anomaly_rate
            )));
        }
        if self.n_patients == 0 || self.n_sensors_per_patient == 0 {
            return Err(Error::Config(
                "n_patients and n_sensors_per_patient must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config(format!(
                "missing_rate {} outside [0, 1)",
                self.missing_rate
            )));
        }
        for (name, w) in [
            ("fault_mix", &self.fault_mix.weights()[..]),
            ("attack_mix", &self.attack_mix.weights()[..]),
        ] {
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || w.iter().all(|&x| x == 0.0) {
                return Err(Error::Config(format!(
                    "{name} weights must be non-negative and not all zero"
                )));
            }
        }
        Ok(())
    }

    /// Exact number of anomalous records.
    pub fn n_anomalies(&self) -> usize {
        (self.anomaly_rate * self.n_records as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceFault {
    TemperatureSpike,
    BatteryCollapse,
    FrozenReading,
    ErroneousValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    SynBurst,
    ResetStorm,
    MqttExploit,
}

/// Generated records together with the ground-truth scenario of each one.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized<R, K> {
    pub records: Vec<R>,
    /// `None` for normal records.
    pub kinds: Vec<Option<K>>,
}

const SENSOR_TYPES: [&str; 9] = [
    "ECG", "SpO2", "NIBP", "Temp", "Resp", "EtCO2", "IBP", "PulseOx", "Glucose",
];

const HEALTH_STATUS: [(&str, f64); 3] = [("Stable", 0.7), ("Monitoring", 0.25), ("Critical", 0.05)];

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

/// Marks exactly `k` of `n` positions, chosen uniformly.
fn anomaly_positions(rng: &mut SplitMix64, n: usize, k: usize) -> Vec<bool> {
    let mut marks = vec![false; n];
    for i in rng.sample_indices(n, k) {
        marks[i] = true;
    }
    marks
}

pub fn generate_device_data(cfg: &GenConfig) -> Result<Vec<DeviceRecord>> {
    Ok(generate_device_data_with_truth(cfg)?.records)
}

/// Device readings for `n_patients * n_sensors_per_patient` streams, emitted
/// in (patient, sensor, timestamp) order.
pub fn generate_device_data_with_truth(
    cfg: &GenConfig,
) -> Result<Synthesized<DeviceRecord, DeviceFault>> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let n = cfg.n_records;
    let faulty = anomaly_positions(&mut rng, n, cfg.n_anomalies());
    let weights = cfg.fault_mix.weights();
    let b = &cfg.baselines;
    let n_streams = cfg.n_patients * cfg.n_sensors_per_patient;
    let health_weights: Vec<f64> = HEALTH_STATUS.iter().map(|(_, w)| *w).collect();

    let mut records = Vec::with_capacity(n);
    let mut kinds = Vec::with_capacity(n);
    let mut pos = 0;
    for p in 0..cfg.n_patients {
        // Per-patient baselines: shift each mean by up to half a std.
        let mut shifted = |v: Vital| v.mean + rng.uniform(-0.5, 0.5) * v.std;
        let temp_mean = shifted(b.temperature);
        let hr_mean = shifted(b.heart_rate);
        let sys_mean = shifted(b.systolic_bp);
        let dia_mean = shifted(b.diastolic_bp);
        let patient_id = format!("P{:03}", p + 1);

        for s in 0..cfg.n_sensors_per_patient {
            let stream = p * cfg.n_sensors_per_patient + s;
            let len = n / n_streams + usize::from(stream < n % n_streams);
            let sensor_id = format!("S{:03}", stream + 1);
            let sensor_type = SENSOR_TYPES[s % SENSOR_TYPES.len()];
            let start = cfg.start_epoch + stream as i64 * 7;
            let mut prev: Option<[f64; 5]> = None;

            for i in 0..len {
                let drain = if len > 1 { i as f64 / (len - 1) as f64 } else { 0.0 };
                let battery = b.battery_start - (b.battery_start - b.battery_end) * drain
                    + rng.normal(0.0, 0.3);
                // temperature, systolic, diastolic, heart rate, battery
                let mut vitals = [
                    round_to(rng.normal(temp_mean, b.temperature.std), 2),
                    rng.normal(sys_mean, b.systolic_bp.std).round(),
                    rng.normal(dia_mean, b.diastolic_bp.std).round(),
                    rng.normal(hr_mean, b.heart_rate.std).round(),
                    round_to(battery.clamp(0.0, 100.0), 2),
                ];
                let status = HEALTH_STATUS[rng.weighted_index(&health_weights)].0;

                let kind = if faulty[pos] {
                    let kind = match rng.weighted_index(&weights) {
                        0 => DeviceFault::TemperatureSpike,
                        1 => DeviceFault::BatteryCollapse,
                        2 => DeviceFault::FrozenReading,
                        _ => DeviceFault::ErroneousValue,
                    };
                    match kind {
                        DeviceFault::TemperatureSpike => {
                            vitals[0] = round_to(vitals[0] + rng.uniform(3.0, 6.0), 2);
                        }
                        DeviceFault::BatteryCollapse => {
                            vitals[4] = round_to(rng.uniform(0.0, 5.0), 2);
                        }
                        DeviceFault::FrozenReading => {
                            if let Some(p) = prev {
                                vitals = p;
                            }
                        }
                        DeviceFault::ErroneousValue => {
                            // Heart-rate sensor glitch, either implausibly low or high.
                            vitals[3] = if rng.bernoulli(0.5) {
                                rng.uniform(200.0, 250.0).round()
                            } else {
                                rng.uniform(5.0, 25.0).round()
                            };
                        }
                    }
                    Some(kind)
                } else {
                    None
                };

                let cell = |v: f64, rng: &mut SplitMix64| {
                    (kind.is_some() || !rng.bernoulli(cfg.missing_rate)).then_some(v)
                };
                let record = DeviceRecord {
                    patient_id: patient_id.clone(),
                    timestamp: start + i as i64 * cfg.interval_seconds,
                    sensor_id: sensor_id.clone(),
                    sensor_type: sensor_type.to_string(),
                    temperature: cell(vitals[0], &mut rng),
                    systolic_bp: cell(vitals[1], &mut rng),
                    diastolic_bp: cell(vitals[2], &mut rng),
                    heart_rate: cell(vitals[3], &mut rng),
                    battery_level: cell(vitals[4], &mut rng),
                    target_blood_pressure: Some(sys_mean.round()),
                    target_heart_rate: Some(hr_mean.round()),
                    target_health_status: status.to_string(),
                    label: u8::from(kind.is_some()),
                };
                prev = Some(vitals);
                records.push(record);
                kinds.push(kind);
                pos += 1;
            }
        }
    }
    Ok(Synthesized { records, kinds })
}

const BROKER: &str = "192.168.1.2";
const CLIENTS: [(&str, &str, u16); 3] = [
    ("192.168.1.11", "bed1-ctrl", 50_211),
    ("192.168.1.12", "bed2-ctrl", 50_347),
    ("192.168.1.20", "nurse-station", 51_002),
];
const ATTACKERS: [&str; 3] = ["10.0.0.66", "10.0.0.77", "172.16.5.9"];
const TOPICS: [&str; 8] = [
    "icu/bed1/hr",
    "icu/bed1/bp",
    "icu/bed1/temp",
    "icu/bed1/spo2",
    "icu/bed2/hr",
    "icu/bed2/bp",
    "icu/bed2/temp",
    "icu/bed2/spo2",
];
const MQTT_PORT: u16 = 1883;

struct Packet {
    delta: f64,
    len: f64,
    src: String,
    dst: String,
    sport: u16,
    dport: u16,
    /// ack, fin, push, reset, syn
    flags: [u8; 5],
    msgtype: u8,
    qos: u8,
    retain: u8,
    topic: String,
    clientid: String,
    ttl: f64,
    hdr_len: f64,
    ack_no: f64,
    mqtt_ver: f64,
    dupflag: f64,
}

impl Packet {
    fn tcp(src: &str, dst: &str, sport: u16, dport: u16, flags: [u8; 5]) -> Self {
        Self {
            delta: 0.0,
            len: 54.0,
            src: src.to_string(),
            dst: dst.to_string(),
            sport,
            dport,
            flags,
            msgtype: 0,
            qos: 0,
            retain: 0,
            topic: String::new(),
            clientid: String::new(),
            ttl: 64.0,
            hdr_len: 20.0,
            ack_no: 0.0,
            mqtt_ver: 0.0,
            dupflag: 0.0,
        }
    }
}

fn exponential(rng: &mut SplitMix64, mean: f64) -> f64 {
    -(1.0 - rng.next_f64()).ln() * mean
}

fn normal_packet(rng: &mut SplitMix64) -> Packet {
    let (client, clientid, cport) = CLIENTS[rng.index(CLIENTS.len())];
    let to_broker = rng.bernoulli(0.5);
    let (src, dst, sport, dport) = if to_broker {
        (client, BROKER, cport, MQTT_PORT)
    } else {
        (BROKER, client, MQTT_PORT, cport)
    };
    let kind = rng.weighted_index(&[0.45, 0.35, 0.08, 0.04, 0.03, 0.03, 0.02]);
    let mut p = match kind {
        // PUBLISH
        0 => {
            let mut p = Packet::tcp(src, dst, sport, dport, [1, 0, 1, 0, 0]);
            p.msgtype = 3;
            p.topic = TOPICS[rng.index(TOPICS.len())].to_string();
            p.qos = u8::from(rng.bernoulli(0.2));
            p.retain = u8::from(rng.bernoulli(0.05));
            p.len = 58.0 + p.topic.len() as f64 + rng.uniform(8.0, 64.0).round();
            p
        }
        // bare ACK
        1 => {
            let mut p = Packet::tcp(src, dst, sport, dport, [1, 0, 0, 0, 0]);
            p.len = 54.0 + (rng.index(3) * 6) as f64;
            p
        }
        // PINGREQ / PINGRESP
        2 => {
            let mut p = Packet::tcp(src, dst, sport, dport, [1, 0, 1, 0, 0]);
            p.msgtype = if to_broker { 12 } else { 13 };
            p.len = 56.0;
            p
        }
        // CONNECT / CONNACK
        3 => {
            let mut p = Packet::tcp(src, dst, sport, dport, [1, 0, 1, 0, 0]);
            if to_broker {
                p.msgtype = 1;
                p.clientid = clientid.to_string();
                p.mqtt_ver = 4.0;
                p.len = 66.0 + clientid.len() as f64;
            } else {
                p.msgtype = 2;
                p.len = 58.0;
            }
            p
        }
        // handshake SYN
        4 => {
            let mut p = Packet::tcp(client, BROKER, cport, MQTT_PORT, [0, 0, 0, 0, 1]);
            p.len = 74.0;
            p.hdr_len = 40.0;
            p
        }
        // SYN-ACK
        5 => {
            let mut p = Packet::tcp(BROKER, client, MQTT_PORT, cport, [1, 0, 0, 0, 1]);
            p.len = 74.0;
            p.hdr_len = 40.0;
            p
        }
        // FIN
        _ => Packet::tcp(src, dst, sport, dport, [1, 1, 0, 0, 0]),
    };
    p.delta = 1e-5 + exponential(rng, 0.02);
    if p.flags[0] == 1 {
        p.ack_no = rng.uniform(1.0, 5000.0).round();
    }
    p
}

fn attack_packet(rng: &mut SplitMix64, kind: AttackKind, attacker: &str) -> Packet {
    let ephemeral = 1024 + rng.index(64_000) as u16;
    match kind {
        AttackKind::SynBurst => {
            let mut p = Packet::tcp(attacker, BROKER, ephemeral, MQTT_PORT, [0, 0, 0, 0, 1]);
            p.delta = rng.uniform(1e-6, 5e-5);
            p.len = 60.0;
            p.hdr_len = 20.0;
            p.ttl = [128.0, 255.0][rng.index(2)];
            p
        }
        AttackKind::ResetStorm => {
            let (_, _, cport) = CLIENTS[rng.index(CLIENTS.len())];
            let mut p = Packet::tcp(attacker, BROKER, cport, MQTT_PORT, [1, 0, 0, 1, 0]);
            p.delta = rng.uniform(1e-5, 5e-4);
            p.len = 54.0 + (rng.index(2) * 6) as f64;
            p.ttl = 128.0;
            p.ack_no = rng.uniform(1.0, 5000.0).round();
            p
        }
        AttackKind::MqttExploit => {
            let mut p = Packet::tcp(attacker, BROKER, ephemeral, MQTT_PORT, [1, 0, 1, 0, 0]);
            p.delta = 1e-5 + exponential(rng, 0.02);
            p.msgtype = [0, 15][rng.index(2)];
            p.qos = 2;
            p.retain = 1;
            p.dupflag = 1.0;
            let topic_len = 300 + rng.index(1200);
            p.topic = format!("icu/{}", "A".repeat(topic_len));
            p.clientid = (0..40)
                .map(|_| char::from_digit(rng.index(16) as u32, 16).unwrap())
                .collect();
            p.len = 58.0 + p.topic.len() as f64 + p.clientid.len() as f64;
            p.ttl = 128.0;
            p.ack_no = rng.uniform(1.0, 5000.0).round();
            p
        }
    }
}

pub fn generate_attack_data(cfg: &GenConfig) -> Result<Vec<NetRecord>> {
    Ok(generate_attack_data_with_truth(cfg)?.records)
}

/// MQTT/TCP traffic between bed control units, a nurse station and a broker,
/// with attack runs (SYN bursts, reset storms, MQTT exploits) from external
/// hosts spliced in at random positions.
pub fn generate_attack_data_with_truth(
    cfg: &GenConfig,
) -> Result<Synthesized<NetRecord, AttackKind>> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(SplitMix64::derive_seed(cfg.seed, 0xA77A));
    let n = cfg.n_records;
    let n_attacks = cfg.n_anomalies();
    let n_normal = n - n_attacks;
    let weights = cfg.attack_mix.weights();

    // Attack runs and their insertion points among the normal packets.
    let mut runs = Vec::new();
    let mut remaining = n_attacks;
    while remaining > 0 {
        let kind = match rng.weighted_index(&weights) {
            0 => AttackKind::SynBurst,
            1 => AttackKind::ResetStorm,
            _ => AttackKind::MqttExploit,
        };
        let len = match kind {
            AttackKind::SynBurst => 20 + rng.index(41),
            AttackKind::ResetStorm => 10 + rng.index(21),
            AttackKind::MqttExploit => 1 + rng.index(4),
        }
        .min(remaining);
        let at = rng.index(n_normal + 1);
        let attacker = ATTACKERS[rng.index(ATTACKERS.len())];
        runs.push((at, kind, len, attacker));
        remaining -= len;
    }
    runs.sort_by_key(|r| r.0);

    let mut packets: Vec<(Packet, Option<AttackKind>)> = Vec::with_capacity(n);
    let mut next_run = 0;
    for slot in 0..=n_normal {
        while next_run < runs.len() && runs[next_run].0 == slot {
            let (_, kind, len, attacker) = runs[next_run];
            for _ in 0..len {
                packets.push((attack_packet(&mut rng, kind, attacker), Some(kind)));
            }
            next_run += 1;
        }
        if slot < n_normal {
            packets.push((normal_packet(&mut rng), None));
        }
    }

    let mut clock = 0.0;
    let mut records = Vec::with_capacity(n);
    let mut kinds = Vec::with_capacity(n);
    for (p, kind) in packets {
        clock += p.delta;
        let normal = kind.is_none();
        let blank = |rng: &mut SplitMix64, v: f64| {
            (!normal || !rng.bernoulli(cfg.missing_rate)).then_some(v)
        };
        let [ack, fin, push, reset, syn] = p.flags;
        let flag_bits = fin as f64 + 2.0 * syn as f64 + 4.0 * reset as f64 + 8.0 * push as f64 + 16.0 * ack as f64;
        let mut extra = BTreeMap::new();
        extra.insert("ip.ttl".to_string(), blank(&mut rng, p.ttl));
        extra.insert("ip.proto".to_string(), Some(6.0));
        extra.insert("tcp.hdr_len".to_string(), blank(&mut rng, p.hdr_len));
        let stream_delta = round_to(p.delta * (1.0 + 4.0 * rng.next_f64()), 9);
        extra.insert("tcp.time_delta".to_string(), blank(&mut rng, stream_delta));
        extra.insert("tcp.ack".to_string(), blank(&mut rng, p.ack_no));
        extra.insert("tcp.flags".to_string(), Some(flag_bits));
        extra.insert(
            "tcp.connection.syn".to_string(),
            Some(f64::from(syn == 1 && ack == 0)),
        );
        extra.insert("tcp.connection.rst".to_string(), Some(reset as f64));
        extra.insert("mqtt.ver".to_string(), Some(p.mqtt_ver));
        extra.insert("mqtt.dupflag".to_string(), Some(p.dupflag));
        extra.insert("mqtt.conflag.qos".to_string(), Some(0.0));
        let mut record = NetRecord {
            frame_time_delta: Some(round_to(p.delta, 9)),
            frame_time_relative: Some(round_to(clock, 9)),
            frame_len: blank(&mut rng, p.len),
            ip_src: p.src,
            ip_dst: p.dst,
            tcp_srcport: Some(p.sport),
            tcp_dstport: Some(p.dport),
            tcp_flags_ack: Some(ack),
            tcp_flags_fin: Some(fin),
            tcp_flags_push: Some(push),
            tcp_flags_reset: Some(reset),
            tcp_flags_syn: Some(syn),
            mqtt_msgtype: Some(p.msgtype),
            mqtt_qos: Some(p.qos),
            mqtt_retain: Some(p.retain),
            mqtt_topic: p.topic,
            mqtt_clientid: p.clientid,
            extra,
            label: u8::from(!normal),
        };
        record.refresh_derived();
        records.push(record);
        kinds.push(kind);
    }
    Ok(Synthesized { records, kinds })
}
