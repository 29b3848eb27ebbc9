//! Bubble segmentation: thresholding, morphology, labelling, contours,
//! ellipse fits and the free-surface locator.

mod components;
mod contour;
mod detect;
mod ellipse;
mod mask;
mod morphology;
mod shen_castan;
pub mod surface;
mod threshold;

pub use components::{connected_components, BoundingBox, Component, Connectivity};
pub use contour::{trace_contour, Contour};
pub use detect::{detect_bubbles, Route, SegmentConfig};
pub use ellipse::{fit_ellipse, Detection, Origin, Quality};
pub use mask::BinaryMask;
pub use morphology::{fill_holes, morphological_thin};
pub use shen_castan::{isef_smooth, shen_castan_edges, shen_castan_edges_with};
pub use surface::{detect_free_surface, free_surface_row};
pub use threshold::{
    adaptive_binarize, binarize, histogram, local_mean, otsu_bin, otsu_threshold, otsu_threshold_values, Polarity,
};
