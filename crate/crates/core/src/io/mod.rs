//! Configuration loading, field export and JSON reports.

pub mod config;
pub mod export;
pub mod report;

pub use config::{load_config, ConfigError, RunConfig};
pub use export::{export_field_csv, export_heatmap, read_field_csv, ExportError};
pub use report::{write_report_json, ComparisonDocument, DesignDocument};
