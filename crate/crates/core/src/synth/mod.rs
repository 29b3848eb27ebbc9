//! Synthetic radiograph sequences with exact ground truth, and scoring of
//! pipeline output against that truth.

mod render;
mod scenario;
mod score;
mod truth;

pub use render::{render_sequence, RenderedScene, INSIDE_MARGIN_PX};
pub use scenario::{half_extents, BubbleTrack, ColumnSpec, EllipseState, ScenarioSpec, DEFAULT_ATTENUATION};
pub use score::{score_detections, score_velocity, DetectionScore, VelocityBinError};
pub use truth::{GroundTruth, TruthState};
