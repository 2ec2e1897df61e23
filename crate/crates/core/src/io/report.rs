//! JSON reports, configuration files and CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{DetectionHypothesis, DetectorConfig, Similarity, SphereDetection};
use crate::error::{Error, Result};
use crate::quadric::{Point3, QuadricCoefficients};
use crate::synth::{GroundTruthScene, SweepRow};

pub const SCHEMA_VERSION: u32 = 1;

pub const SWEEP_HEADER: &str = "method,sigma,trial,geom_err,ang_err,gradnorm_err,runtime_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadricEntry {
    /// Normalized coefficients `(A..J)` in the input frame.
    pub q: [f64; 10],
    pub class: String,
    pub score: f64,
    pub votes: usize,
    pub support_count: usize,
    /// Coefficients in the unit-ball frame the detector worked in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_normalized_frame: Option<[f64; 10]>,
}

impl QuadricEntry {
    pub fn from_hypothesis(h: &DetectionHypothesis, similarity: &Similarity, debug: bool) -> Self {
        let q = crate::detector::denormalize(&h.q, similarity);
        QuadricEntry {
            q: q.to_array(),
            class: q.matrix().classify().to_string(),
            score: h.score,
            votes: h.votes,
            support_count: h.support_count,
            q_normalized_frame: debug.then(|| h.q.to_array()),
        }
    }

    pub fn quadric(&self) -> Result<QuadricCoefficients> {
        QuadricCoefficients::from_array(self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereEntry {
    pub center: [f64; 3],
    pub radius: f64,
    pub score: f64,
    pub votes: usize,
    pub support_count: usize,
}

impl SphereEntry {
    pub fn from_detection(s: &SphereDetection, similarity: &Similarity) -> Self {
        let d = s.denormalized(similarity);
        SphereEntry {
            center: [d.center.x, d.center.y, d.center.z],
            radius: d.radius,
            score: d.score,
            votes: d.votes,
            support_count: d.support_count,
        }
    }

    pub fn center(&self) -> Point3 {
        Point3::from(self.center)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub prepare_s: f64,
    pub detect_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub center: [f64; 3],
    pub scale: f64,
}

impl From<&Similarity> for SimilarityRecord {
    fn from(s: &Similarity) -> Self {
        SimilarityRecord {
            center: [s.center.x, s.center.y, s.center.z],
            scale: s.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub schema_version: u32,
    /// `generic` or `sphere`.
    pub detector: String,
    pub input: String,
    pub seed: u64,
    pub config: DetectorConfig,
    pub input_points: usize,
    pub sampled_points: usize,
    pub normalization: SimilarityRecord,
    pub quadrics: Vec<QuadricEntry>,
    pub spheres: Vec<SphereEntry>,
    /// Present only when timings were requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub method: String,
    pub omega: f64,
    pub points: usize,
    pub q: [f64; 10],
    pub class: String,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphere: Option<SphereFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereFit {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Ground truth of a synthetic scene, written next to the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub schema_version: u32,
    pub seed: u64,
    pub noise_sigma: f64,
    pub quadrics: Vec<[f64; 10]>,
    pub classes: Vec<String>,
    /// Quadric index per point, `-1` for clutter.
    pub labels: Vec<i64>,
}

impl SceneTruth {
    pub fn from_scene(scene: &GroundTruthScene, seed: u64) -> Self {
        SceneTruth {
            schema_version: SCHEMA_VERSION,
            seed,
            noise_sigma: scene.noise_sigma,
            quadrics: scene.quadrics.iter().map(|q| q.to_array()).collect(),
            classes: scene.quadrics.iter().map(|q| q.matrix().classify().to_string()).collect(),
            labels: scene.labels.iter().map(|l| l.map_or(-1, |i| i as i64)).collect(),
        }
    }

    pub fn quadrics(&self) -> Result<Vec<QuadricCoefficients>> {
        self.quadrics.iter().map(|q| QuadricCoefficients::from_array(*q)).collect()
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json(value)?).map_err(|e| io_err(path, e))
}

pub fn write_report(report: &DetectionReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn read_report(path: &Path) -> Result<DetectionReport> {
    read_json(path)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Detector configuration from TOML or JSON (chosen by extension, `.json`
/// or anything else as TOML).
pub fn load_config(path: &Path) -> Result<DetectorConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let is_json = path.extension().and_then(|e| e.to_str()) == Some("json");
    let config: DetectorConfig = if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: e
                .span()
                .map(|s| format!("byte {}", s.start))
                .unwrap_or_else(|| "unknown".into()),
            message: e.message().to_string(),
        })?
    };
    config.validate()?;
    Ok(config)
}

fn float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Sweep table as CSV with 17 significant digits per float.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method.name(),
            float(r.sigma),
            r.trial,
            float(m.geom_err),
            float(m.ang_err),
            float(m.gradnorm_err),
            float(m.runtime_s)
        );
    }
    out
}

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    fs::write(path, sweep_csv(rows)).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{FitMethod, FitMetrics};
    use tempfile::tempdir;

    fn report(quadrics: Vec<QuadricEntry>) -> DetectionReport {
        DetectionReport {
            schema_version: SCHEMA_VERSION,
            detector: "generic".into(),
            input: "scene.ply".into(),
            seed: 7,
            config: DetectorConfig::default(),
            input_points: 10,
            sampled_points: 8,
            normalization: SimilarityRecord {
                center: [0.1, 0.2, 0.3],
                scale: 2.5,
            },
            quadrics,
            spheres: vec![],
            timings: None,
        }
    }

    #[test]
    fn empty_report_is_valid_json() {
        let text = to_json(&report(vec![])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["quadrics"], serde_json::json!([]));
        assert_eq!(v["schema_version"], 1);
    }

    #[test]
    fn report_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("r.json");
        let r = report(vec![QuadricEntry {
            q: [1.0 / 3.0, 0.1, -0.2, 1e-17, 0.0, 0.0, 0.5, 0.25, 0.125, -1.0],
            class: "central".into(),
            score: 0.75,
            votes: 12,
            support_count: 30,
            q_normalized_frame: None,
        }]);
        write_report(&r, &p).unwrap();
        assert_eq!(read_report(&p).unwrap(), r);
    }

    #[test]
    fn csv_header_and_rows() {
        let rows = vec![SweepRow {
            method: FitMethod::Approx,
            sigma: 0.01,
            trial: 3,
            metrics: FitMetrics {
                geom_err: 0.1,
                ang_err: f64::NAN,
                gradnorm_err: 0.0,
                runtime_s: 0.0,
                failure: None,
            },
        }];
        let csv = sweep_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("ours-approx,1.0000000000000000e-2,3,1.0000000000000001e-1,nan,"));
    }

    #[test]
    fn config_files() {
        let dir = tempdir().unwrap();
        let t = dir.path().join("c.toml");
        fs::write(&t, "tau_n = 0.9\nseed = 4\n").unwrap();
        let c = load_config(&t).unwrap();
        assert_eq!((c.tau_n, c.seed), (0.9, 4));
        let j = dir.path().join("c.json");
        fs::write(&j, r#"{"s_min": 3}"#).unwrap();
        assert_eq!(load_config(&j).unwrap().s_min, 3);
        fs::write(&t, "tau_n = -1\n").unwrap();
        assert!(matches!(load_config(&t), Err(Error::InvalidConfig(_))));
        fs::write(&t, "bogus = 1\n").unwrap();
        assert!(matches!(load_config(&t), Err(Error::Parse { .. })));
    }
}
