//! CSV ingestion and deterministic synthesis of labelled datasets.

mod csv_io;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use csv_io::{
    parse_attack_csv, parse_device_csv, write_attack_csv, write_device_csv, ATTACK_COLUMNS,
    DEVICE_COLUMNS,
};
pub use synth::{
    generate_attack_data, generate_attack_data_with_truth, generate_device_data,
    generate_device_data_with_truth, AttackKind, AttackMix, DeviceFault, FaultMix, GenConfig,
    Synthesized, VitalBaselines,
};

/// Records parsed from a file, with bookkeeping about what was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub report: ParseReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    /// Numeric cells that were blank or unparseable.
    pub missing_cells: usize,
    pub missing_by_column: BTreeMap<String, usize>,
    /// Unknown columns that were not numeric and therefore not ingested.
    pub skipped_columns: Vec<String>,
}
