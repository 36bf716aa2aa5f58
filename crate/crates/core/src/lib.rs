//! Anomaly detection for IoT healthcare telemetry.
//!
//! The crate covers the whole pipeline: ingesting or synthesising device and
//! network records, preprocessing and feature engineering, feature selection,
//! six detector families, and an evaluation harness that produces metric
//! reports.
//!
//! ```text
//! ingest -> preprocess -> featsel -> detectors -> eval
//! ```

pub mod commands;
pub mod datamodel;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod featsel;
pub mod ingest;
pub mod preprocess;
pub mod rng;

pub use datamodel::{
    DetectorSpec, DeviceRecord, EvalReport, Family, FeatureMatrix, NetRecord, Preset, Task,
};
pub use error::{Error, Result};
