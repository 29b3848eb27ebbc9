//! Bubble detection, tracking and velocimetry for radiograph sequences.

// negated float comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoise;
pub mod error;
pub mod frame;
pub mod imagestack;
pub mod pipeline;
pub mod segment;
pub mod synth;
pub mod track;

pub use error::{Error, Result};
pub use frame::{Frame, Roi};
