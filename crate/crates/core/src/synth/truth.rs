use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact state of one bubble in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthState {
    pub frame_index: usize,
    pub time_s: f64,
    pub bubble_id: usize,
    pub x_mm: f64,
    pub y_mm: f64,
    pub a_mm: f64,
    pub b_mm: f64,
    pub theta_rad: f64,
    pub area_mm2: f64,
    pub aspect: f64,
    pub vx_mm_s: f64,
    pub vy_mm_s: f64,
    /// Fully visible, clear of the frame border and the free surface.
    pub inside: bool,
}

/// Every bubble state that overlaps the field of view, ordered by frame and
/// bubble id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub states: Vec<TruthState>,
}

impl GroundTruth {
    pub fn frame(&self, index: usize) -> &[TruthState] {
        let lo = self.states.partition_point(|s| s.frame_index < index);
        let hi = self.states.partition_point(|s| s.frame_index <= index);
        &self.states[lo..hi]
    }

    pub fn frame_count(&self) -> usize {
        self.states.last().map_or(0, |s| s.frame_index + 1)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::write(path, e))?;
        for s in &self.states {
            w.serialize(s).map_err(|e| Error::write(path, e))?;
        }
        w.flush().map_err(|e| Error::write(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<GroundTruth> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::read(path, e))?;
        let mut states: Vec<TruthState> = r
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| Error::read(path, e))?;
        states.sort_by_key(|s| (s.frame_index, s.bubble_id));
        Ok(GroundTruth { states })
    }
}
