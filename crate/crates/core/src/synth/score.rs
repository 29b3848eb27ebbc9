use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::Detection;
use crate::track::{mean_and_sem, VelocityProfile};

use super::truth::{GroundTruth, TruthState};

/// Detection quality against ground truth.
///
/// Only truths flagged `inside` are scored; a detection matched to a bubble
/// that is cut by the border or the surface counts neither way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub truths: usize,
    pub detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub recall: f64,
    /// False positives over true plus false positives.
    pub false_positive_rate: f64,
    /// Centroid error of the true positives, pixels.
    pub centroid_rmse_px: Option<f64>,
    /// Mean of `(|da|/a + |db|/b) / 2` over the true positives.
    pub semi_axis_mape: Option<f64>,
}

/// Greedy nearest matching per frame: all pairs closer than
/// `match_radius_px` are taken shortest first.
pub fn score_detections(
    detections: &[Detection],
    truth: &GroundTruth,
    match_radius_px: f64,
    pixel_pitch: f64,
) -> DetectionScore {
    let mut by_frame: BTreeMap<usize, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame_index).or_default().push(d);
    }
    let truths = truth.states.iter().filter(|s| s.inside).count();
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut sq, mut ape) = (0.0, 0.0);
    for (&frame, dets) in &by_frame {
        let states = truth.frame(frame);
        let mut pairs = Vec::new();
        for (i, d) in dets.iter().enumerate() {
            for (j, s) in states.iter().enumerate() {
                let dist = (d.x - s.x_mm).hypot(d.y - s.y_mm) / pixel_pitch;
                if dist <= match_radius_px {
                    pairs.push((dist, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut det_used = vec![false; dets.len()];
        let mut truth_used = vec![false; states.len()];
        for (dist, i, j) in pairs {
            if det_used[i] || truth_used[j] {
                continue;
            }
            det_used[i] = true;
            truth_used[j] = true;
            let s: &TruthState = &states[j];
            if s.inside {
                tp += 1;
                sq += dist * dist;
                ape += 0.5 * ((dets[i].a - s.a_mm).abs() / s.a_mm + (dets[i].b - s.b_mm).abs() / s.b_mm);
            }
        }
        fp += det_used.iter().filter(|&&u| !u).count();
    }
    DetectionScore {
        truths,
        detections: detections.len(),
        true_positives: tp,
        false_positives: fp,
        recall: if truths == 0 { 1.0 } else { tp as f64 / truths as f64 },
        false_positive_rate: if tp + fp == 0 { 0.0 } else { fp as f64 / (tp + fp) as f64 },
        centroid_rmse_px: (tp > 0).then(|| (sq / tp as f64).sqrt()),
        semi_axis_mape: (tp > 0).then(|| ape / tp as f64),
    }
}

/// One elevation bin of a measured profile next to the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityBinError {
    pub y_low: f64,
    pub y_high: f64,
    pub n: usize,
    pub truth_n: usize,
    pub vy_measured: f64,
    pub vy_truth: f64,
    /// `|measured - truth| / |truth|`.
    pub vy_rel_error: f64,
    pub vx_measured: f64,
    pub vx_truth: f64,
    pub vx_abs_error: f64,
}

/// Compares every populated profile bin with the mean analytic velocity of
/// the scored truth states whose centres fall in the same bin.
pub fn score_velocity(profile: &VelocityProfile, truth: &GroundTruth) -> Result<Vec<VelocityBinError>> {
    let mut out = Vec::new();
    for bin in profile.bins.iter().filter(|b| !b.is_empty()) {
        let in_bin: Vec<&TruthState> = truth
            .states
            .iter()
            .filter(|s| s.inside && s.y_mm >= bin.y_low && s.y_mm < bin.y_high)
            .collect();
        let vy: Vec<f64> = in_bin.iter().map(|s| s.vy_mm_s).collect();
        let vx: Vec<f64> = in_bin.iter().map(|s| s.vx_mm_s).collect();
        let (Some(vy_truth), Some(vx_truth)) = (mean_and_sem(&vy).0, mean_and_sem(&vx).0) else {
            continue;
        };
        let (vy_measured, vx_measured) = (bin.vy_mean.expect("populated"), bin.vx_mean.expect("populated"));
        out.push(VelocityBinError {
            y_low: bin.y_low,
            y_high: bin.y_high,
            n: bin.n,
            truth_n: in_bin.len(),
            vy_measured,
            vy_truth,
            vy_rel_error: (vy_measured - vy_truth).abs() / vy_truth.abs(),
            vx_measured,
            vx_truth,
            vx_abs_error: (vx_measured - vx_truth).abs(),
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    Ok(out)
}

impl GroundTruth {
    /// Truth states as ideal detections.
    pub fn to_detections(&self, inside_only: bool) -> Vec<Detection> {
        self.states
            .iter()
            .filter(|s| s.inside || !inside_only)
            .map(|s| Detection {
                frame_index: s.frame_index,
                time: s.time_s,
                x: s.x_mm,
                y: s.y_mm,
                a: s.a_mm,
                b: s.b_mm,
                theta: s.theta_rad,
                area: s.area_mm2,
                aspect: s.aspect,
                quality: crate::segment::Quality::Ok,
            })
            .collect()
    }
}
