//! Plot-ready CSV and JSON outputs and the run manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::segment::Detection;
use crate::track::{EnvelopeStats, Trajectory, VelocityProfile, VelocitySample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub traj_id: usize,
    pub frame: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    /// Bin centre, mm.
    pub y_bin: f64,
    pub vx_mean: Option<f64>,
    pub vx_err: Option<f64>,
    pub vy_mean: Option<f64>,
    pub vy_err: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub y_bin: f64,
    pub left: f64,
    pub right: f64,
}

/// Serialises `rows` as CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::write(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::write(path, e))?;
    }
    w.flush().map_err(|e| Error::write(path, e))
}

/// Like [`write_csv`], but also writes the header when `rows` is empty.
pub fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        return fs::write(path, format!("{}\n", header.join(","))).map_err(|e| Error::write(path, e));
    }
    write_csv(path, rows)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::read(path, e))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| Error::read(path, e))
}

pub const DETECTION_HEADER: &[&str] = &[
    "frame_index", "time_s", "x_mm", "y_mm", "a_mm", "b_mm", "theta_rad", "area_mm2", "aspect", "quality",
];

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    write_csv_with_header(path, DETECTION_HEADER, detections)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    read_csv(path)
}

pub fn trajectory_rows(trajectories: &[Trajectory]) -> Vec<TrajectoryRow> {
    trajectories
        .iter()
        .flat_map(|t| {
            t.detections.iter().map(move |d| TrajectoryRow {
                traj_id: t.id,
                frame: d.frame_index,
                t: d.time,
                x: d.x,
                y: d.y,
                a: d.a,
                b: d.b,
                theta: d.theta,
            })
        })
        .collect()
}

pub fn profile_rows(profile: &VelocityProfile) -> Vec<ProfileRow> {
    profile
        .bins
        .iter()
        .map(|b| ProfileRow {
            y_bin: b.y_mid(),
            vx_mean: b.vx_mean,
            vx_err: b.vx_err,
            vy_mean: b.vy_mean,
            vy_err: b.vy_err,
            n: b.n,
        })
        .collect()
}

pub fn envelope_rows(env: &EnvelopeStats) -> Vec<EnvelopeRow> {
    env.bins
        .iter()
        .map(|b| EnvelopeRow {
            y_bin: 0.5 * (b.y_low + b.y_high),
            left: b.left,
            right: b.right,
        })
        .collect()
}

pub fn sample_header() -> &'static [&'static str] {
    &["trajectory", "frame_index", "time", "x", "y", "vx", "vy", "area", "aspect"]
}

pub fn write_samples(path: &Path, samples: &[VelocitySample]) -> Result<()> {
    write_csv_with_header(path, sample_header(), samples)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Index of everything a run wrote.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub artifacts: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn record(&mut self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        let bytes = fs::metadata(&path).map_err(|e| Error::read(&path, e))?.len();
        self.artifacts.push(ManifestEntry {
            path: name.to_string(),
            sha256: sha256_file(&path)?,
            bytes,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::write(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::write(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::read(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::read(&path, e))
    }

    pub fn hash_of(&self, name: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.path == name).map(|a| a.sha256.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::Quality;

    #[test]
    fn detection_round_trip_and_empty_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_detections(&path, &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().next().unwrap(), DETECTION_HEADER.join(","));
        assert!(read_detections(&path).unwrap().is_empty());

        let d = Detection {
            frame_index: 3,
            time: 0.03,
            x: -1.25,
            y: 4.5,
            a: 1.3,
            b: 0.9,
            theta: 0.2,
            area: 3.675,
            aspect: 1.3 / 0.9,
            quality: Quality::EdgeTouching,
        };
        write_detections(&path, std::slice::from_ref(&d)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), DETECTION_HEADER.join(","));
        assert!(text.contains("edge_touching"));
        assert_eq!(read_detections(&path).unwrap(), vec![d]);
    }

    #[test]
    fn manifest_hashes() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "abc").unwrap();
        let mut m = Manifest {
            status: "ok".into(),
            ..Default::default()
        };
        m.record(dir.path(), "a.txt").unwrap();
        // sha256("abc") from FIPS 180-2
        assert_eq!(
            m.hash_of("a.txt"),
            Some("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
        m.write(dir.path()).unwrap();
        assert_eq!(Manifest::read(dir.path()).unwrap(), m);
    }
}
