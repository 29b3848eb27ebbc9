use serde::{Deserialize, Serialize};

use crate::frame::{median, robust_sigma};
use crate::segment::{Detection, Quality};

/// Axis-aligned rectangle in physical coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectMm {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl RectMm {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterPolicy {
    /// Half-width of the accepted area band in robust sigmas.
    pub area_sigma: f64,
    pub max_aspect: f64,
    pub inlet_exclusion: Option<RectMm>,
    pub surface_y: Option<f64>,
    /// Margin below the surface in semi-major axes.
    pub surface_margin: f64,
    pub dedup_radius_px: f64,
    pub drop_edge_touching: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            area_sigma: 3.0,
            max_aspect: 4.0,
            inlet_exclusion: None,
            surface_y: None,
            surface_margin: 3.0,
            dedup_radius_px: 1.0,
            drop_edge_touching: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    AreaOutlier,
    Aspect,
    Inlet,
    Surface,
    EdgeTouching,
    Duplicate,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::AreaOutlier => "area_outlier",
            RejectReason::Aspect => "aspect",
            RejectReason::Inlet => "inlet",
            RejectReason::Surface => "surface",
            RejectReason::EdgeTouching => "edge_touching",
            RejectReason::Duplicate => "duplicate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub detection: Detection,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Detection>,
    pub rejected: Vec<Rejection>,
}

/// Applies the per-detection rules in a fixed order (area, aspect, edge,
/// inlet, surface) and then collapses near-coincident detections of one
/// frame onto the largest of them. Kept detections retain input order.
pub fn filter_detections(detections: &[Detection], policy: &FilterPolicy, pitch: f64) -> FilterOutcome {
    let areas: Vec<f64> = detections.iter().map(|d| d.area).collect();
    let (lo, hi) = if areas.is_empty() {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let m = median(&areas);
        let half = policy.area_sigma * robust_sigma(&areas, m);
        (m - half, m + half)
    };

    let mut out = FilterOutcome::default();
    let mut survivors = Vec::new();
    for d in detections {
        let reason = if d.area < lo || d.area > hi {
            Some(RejectReason::AreaOutlier)
        } else if d.aspect > policy.max_aspect {
            Some(RejectReason::Aspect)
        } else if policy.drop_edge_touching && d.quality == Quality::EdgeTouching {
            Some(RejectReason::EdgeTouching)
        } else if policy.inlet_exclusion.is_some_and(|r| r.contains(d.x, d.y)) {
            Some(RejectReason::Inlet)
        } else if policy
            .surface_y
            .is_some_and(|ys| d.y > ys - policy.surface_margin * d.a)
        {
            Some(RejectReason::Surface)
        } else {
            None
        };
        match reason {
            Some(reason) => out.rejected.push(Rejection {
                detection: d.clone(),
                reason,
            }),
            None => survivors.push(d),
        }
    }

    let radius = policy.dedup_radius_px * pitch;
    let mut duplicate = vec![false; survivors.len()];
    for i in 0..survivors.len() {
        for j in i + 1..survivors.len() {
            let (p, q) = (survivors[i], survivors[j]);
            if p.frame_index != q.frame_index || (p.x - q.x).hypot(p.y - q.y) > radius {
                continue;
            }
            // the smaller one goes; equal areas keep the earlier one
            if q.area > p.area {
                duplicate[i] = true;
            } else {
                duplicate[j] = true;
            }
        }
    }
    for (d, dup) in survivors.into_iter().zip(duplicate) {
        if dup {
            out.rejected.push(Rejection {
                detection: d.clone(),
                reason: RejectReason::Duplicate,
            });
        } else {
            out.kept.push(d.clone());
        }
    }
    out
}
