use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::segment::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateParams {
    /// Largest plausible speed in mm/s.
    pub v_max: f64,
    /// Frames a track may go unmatched before it ends.
    pub max_coast: usize,
    /// Tracks end once they come within `surface_margin` semi-major axes
    /// of this elevation.
    pub surface_y: Option<f64>,
    pub surface_margin: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        GateParams {
            v_max: 400.0,
            max_coast: 2,
            surface_y: None,
            surface_margin: 3.0,
        }
    }
}

impl GateParams {
    /// Per-frame gate in pixels.
    pub fn gate_px(&self, frame_rate: f64, pitch: f64) -> f64 {
        self.v_max / (frame_rate * pitch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub detections: Vec<Detection>,
}

impl Trajectory {
    pub fn birth(&self) -> usize {
        self.detections[0].frame_index
    }

    pub fn death(&self) -> usize {
        self.detections[self.detections.len() - 1].frame_index
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Number of frames skipped inside the trajectory.
    pub fn gap_count(&self) -> usize {
        self.detections
            .windows(2)
            .map(|w| w[1].frame_index - w[0].frame_index - 1)
            .sum()
    }

    /// Constant-velocity extrapolation of the last position to `frame`.
    fn predict(&self, frame: usize) -> (f64, f64) {
        let n = self.detections.len();
        let last = &self.detections[n - 1];
        if n < 2 {
            return (last.x, last.y);
        }
        let prev = &self.detections[n - 2];
        let span = (last.frame_index - prev.frame_index) as f64;
        let ahead = (frame - last.frame_index) as f64;
        (
            last.x + (last.x - prev.x) / span * ahead,
            last.y + (last.y - prev.y) / span * ahead,
        )
    }
}

/// Greedy frame-to-frame linking.
///
/// A detection is a candidate for a track when its distance to the last
/// track position is within the gate times the number of elapsed frames.
/// Candidates are assigned in order of distance to the constant-velocity
/// prediction, then area difference, then track id and position. Unmatched
/// detections start new tracks in elevation order.
pub fn link_trajectories(detections: &[Detection], gate: &GateParams, frame_rate: f64, pitch: f64) -> Vec<Trajectory> {
    let gate_mm = gate.gate_px(frame_rate, pitch) * pitch;
    let mut frames: BTreeMap<usize, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        frames.entry(d.frame_index).or_default().push(d);
    }

    let mut done: Vec<Trajectory> = Vec::new();
    let mut active: Vec<Trajectory> = Vec::new();
    let mut next_id = 0;
    for (&frame, dets) in &frames {
        // retire tracks that have coasted too long
        let (keep, old): (Vec<_>, Vec<_>) = active
            .into_iter()
            .partition(|t| frame - t.death() <= gate.max_coast + 1);
        done.extend(old);
        active = keep;

        let mut cands = Vec::new();
        for (ti, t) in active.iter().enumerate() {
            let last = t.detections.last().expect("tracks are never empty");
            let elapsed = (frame - last.frame_index) as f64;
            let (px, py) = t.predict(frame);
            for (di, d) in dets.iter().enumerate() {
                if (d.x - last.x).hypot(d.y - last.y) > gate_mm * elapsed {
                    continue;
                }
                let cost = (d.x - px).hypot(d.y - py);
                cands.push((cost, (d.area - last.area).abs(), t.id, d.y, d.x, ti, di));
            }
        }
        cands.sort_by(|p, q| {
            p.0.total_cmp(&q.0)
                .then(p.1.total_cmp(&q.1))
                .then(p.2.cmp(&q.2))
                .then(p.3.total_cmp(&q.3))
                .then(p.4.total_cmp(&q.4))
        });
        let mut track_used = vec![false; active.len()];
        let mut det_used = vec![false; dets.len()];
        for &(_, _, _, _, _, ti, di) in &cands {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            active[ti].detections.push(dets[di].clone());
        }

        let mut fresh: Vec<&Detection> = dets
            .iter()
            .zip(&det_used)
            .filter(|(_, &u)| !u)
            .map(|(d, _)| *d)
            .collect();
        fresh.sort_by(|p, q| p.y.total_cmp(&q.y).then(p.x.total_cmp(&q.x)));
        for d in fresh {
            active.push(Trajectory {
                id: next_id,
                detections: vec![d.clone()],
            });
            next_id += 1;
        }

        if let Some(ys) = gate.surface_y {
            let (keep, old): (Vec<_>, Vec<_>) = active.into_iter().partition(|t| {
                let d = t.detections.last().expect("tracks are never empty");
                d.y <= ys - gate.surface_margin * d.a
            });
            done.extend(old);
            active = keep;
        }
    }
    done.extend(active);
    done.sort_by_key(|t| t.id);
    done
}
