//! Core domain types shared by every other module.

mod detector_spec;
mod matrix;
mod records;
mod report;

pub use detector_spec::{DetectorSpec, Family, Preset};
pub use matrix::FeatureMatrix;
pub use records::{DeviceRecord, NetRecord, Task, DERIVED_NET_COLUMNS};
pub use report::{DatasetDescriptor, EvalReport, ModelRow, Protocol, RowStatus, SCHEMA_VERSION};
