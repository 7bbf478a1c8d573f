//! Line-delimited JSON records, manifests and CSV export.
//!
//! Floats are written with the shortest decimal that round-trips, so reading a
//! file back reproduces the in-memory values bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::IoError;
use crate::metrics::EvalRecord;
use crate::normalize::DatasetManifest;
use crate::trajectory::{Waypoint, Waypoints, WAYPOINT_COUNT};

/// Serialized form of a [`Sample`]; field order is part of the format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub grid_index: [usize; 2],
    pub a12: f64,
    pub alpha12: f64,
    pub a23: f64,
    pub alpha23: f64,
    pub converged_fraction: f64,
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    pub waypoints: Vec<Waypoint>,
}

fn to_rows(v: &[Vector3<f64>]) -> Vec<[f64; 3]> {
    v.iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn from_rows(v: &[[f64; 3]]) -> Vec<Vector3<f64>> {
    v.iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect()
}

impl From<&Sample> for SampleRecord {
    fn from(s: &Sample) -> Self {
        SampleRecord {
            grid_index: [s.grid_index.0, s.grid_index.1],
            a12: s.a12,
            alpha12: s.alpha12,
            a23: s.a23,
            alpha23: s.alpha23,
            converged_fraction: s.converged_fraction,
            positions: to_rows(&s.positions),
            velocities: to_rows(&s.velocities),
            waypoints: s.waypoints.0.to_vec(),
        }
    }
}

impl TryFrom<SampleRecord> for Sample {
    type Error = String;

    fn try_from(r: SampleRecord) -> Result<Self, String> {
        let waypoints: [Waypoint; WAYPOINT_COUNT] = r
            .waypoints
            .try_into()
            .map_err(|w: Vec<Waypoint>| format!("expected {WAYPOINT_COUNT} waypoints, found {}", w.len()))?;
        if r.positions.len() != r.velocities.len() {
            return Err(format!(
                "{} positions but {} velocities",
                r.positions.len(),
                r.velocities.len()
            ));
        }
        Ok(Sample {
            grid_index: (r.grid_index[0], r.grid_index[1]),
            a12: r.a12,
            alpha12: r.alpha12,
            a23: r.a23,
            alpha23: r.alpha23,
            converged_fraction: r.converged_fraction,
            positions: from_rows(&r.positions),
            velocities: from_rows(&r.velocities),
            waypoints: Waypoints(waypoints),
        })
    }
}

/// One model output, keyed by the grid index of the sample it predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: [usize; 2],
    pub a12_hat: f64,
    pub alpha12_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<[f64; 3]>>,
}

impl PredictionRecord {
    pub fn to_eval(&self) -> EvalRecord {
        EvalRecord {
            a12: self.a12_hat,
            alpha12: self.alpha12_hat,
            positions: self.positions.as_deref().map(from_rows),
            velocities: self.velocities.as_deref().map(from_rows),
        }
    }
}

impl From<&Sample> for PredictionRecord {
    fn from(s: &Sample) -> Self {
        PredictionRecord {
            id: [s.grid_index.0, s.grid_index.1],
            a12_hat: s.a12,
            alpha12_hat: s.alpha12,
            positions: Some(to_rows(&s.positions)),
            velocities: Some(to_rows(&s.velocities)),
        }
    }
}

pub fn sample_to_eval(s: &Sample) -> EvalRecord {
    EvalRecord {
        a12: s.a12,
        alpha12: s.alpha12,
        positions: Some(s.positions.clone()),
        velocities: Some(s.velocities.clone()),
    }
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<File, IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| IoError::File {
            path: parent.display().to_string(),
            source,
        })?;
    }
    File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

/// Write one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = BufWriter::new(create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| IoError::Format(e.to_string()))?;
        w.write_all(b"\n").map_err(write_err(path))?;
    }
    w.flush().map_err(write_err(path))
}

/// Parse every non-blank line with `parse`, reporting 1-based line numbers on failure.
pub fn read_jsonl<T>(path: &Path, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, IoError> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(write_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(&line).map_err(|message| IoError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<(), IoError> {
    write_jsonl(path, samples.iter().map(SampleRecord::from))
}

pub fn parse_sample(line: &str) -> Result<Sample, String> {
    let record: SampleRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    Sample::try_from(record)
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>, IoError> {
    read_jsonl(path, parse_sample)
}

/// Accepts prediction records, or full sample records (read as perfect predictions
/// of themselves).
pub fn parse_prediction(line: &str) -> Result<PredictionRecord, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if value.get("a12_hat").is_some() {
        serde_json::from_value(value).map_err(|e| e.to_string())
    } else {
        let sample = Sample::try_from(serde_json::from_value::<SampleRecord>(value).map_err(|e| e.to_string())?)?;
        Ok(PredictionRecord::from(&sample))
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, IoError> {
    read_jsonl(path, parse_prediction)
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::Format(e.to_string()))?;
    w.write_all(b"\n").map_err(write_err(path))?;
    w.flush().map_err(write_err(path))
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), IoError> {
    write_json_pretty(path, manifest)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, IoError> {
    serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })
}

/// Waypoints file: a JSON array of three 7-element arrays.
pub fn read_waypoints(path: &Path) -> Result<Waypoints, IoError> {
    let rows: Vec<Vec<f64>> = serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_waypoint_rows(&rows).map_err(|message| IoError::Parse {
        path: path.display().to_string(),
        line: 0,
        message,
    })
}

pub fn parse_waypoint_rows(rows: &[Vec<f64>]) -> Result<Waypoints, String> {
    if rows.len() != WAYPOINT_COUNT {
        return Err(format!("expected {WAYPOINT_COUNT} waypoints, found {}", rows.len()));
    }
    let mut out = [[0.0; 7]; WAYPOINT_COUNT];
    for (k, row) in rows.iter().enumerate() {
        out[k] = row
            .as_slice()
            .try_into()
            .map_err(|_| format!("waypoint {k} has {} values, expected 7", row.len()))?;
    }
    Ok(Waypoints(out))
}

pub const CSV_HEADER: &str = "frame,px,py,pz,vx,vy,vz";

/// One row per trajectory frame.
pub fn write_sample_csv(w: &mut impl Write, sample: &Sample) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for (k, (p, v)) in sample.positions.iter().zip(&sample.velocities).enumerate() {
        writeln!(w, "{k},{},{},{},{},{},{}", p.x, p.y, p.z, v.x, v.y, v.z)?;
    }
    Ok(())
}

pub fn export_csv(path: &Path, sample: &Sample) -> Result<(), IoError> {
    let mut w = BufWriter::new(create(path)?);
    write_sample_csv(&mut w, sample).map_err(write_err(path))?;
    w.flush().map_err(write_err(path))
}
