//! File formats, reports and configuration.

pub mod cloud;
pub mod report;

pub use cloud::{read_cloud, write_cloud, CloudData, CloudFormat};
pub use report::{
    load_config, read_json, read_report, sweep_csv, to_json, write_csv, write_json, write_report, DetectionReport, FitReport,
    QuadricEntry, SceneTruth, SimilarityRecord, SphereEntry, SphereFit, Timings, SCHEMA_VERSION, SWEEP_HEADER,
};
