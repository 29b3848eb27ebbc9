use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the processing chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),

    #[error("failed to read {path}: {message}")]
    Read { path: PathBuf, message: String },

    #[error("failed to write {path}: {message}")]
    Write { path: PathBuf, message: String },

    #[error("frame {index} has dimensions {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        index: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("unsupported bit depth {0} (expected 8 or 16)")]
    BitDepth(u16),

    #[error("{0} list is empty")]
    EmptyInput(&'static str),

    #[error("flat field does not exceed dark signal on {count} unmasked pixel(s)")]
    NonPositiveFlat { count: usize },

    #[error("region of interest {x},{y} {w}x{h} exceeds frame bounds {width}x{height}")]
    RoiOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("{0}")]
    InvalidParameter(String),

    #[error("curvature flow became unstable at step {step}")]
    Unstable { step: usize },

    #[error("degenerate histogram")]
    DegenerateHistogram,

    #[error("surface not found")]
    SurfaceNotFound,

    #[error("series of length {len} is shorter than 2m+1 = {needed}")]
    SeriesTooShort { len: usize, needed: usize },

    #[error("only {populated} populated elevation bins, need at least {needed}")]
    TooFewBins { populated: usize, needed: usize },

    #[error("no overlap between measured profile and ground truth")]
    EmptyOverlap,

    #[error("frame index {index} out of range (sequence has {len} frames)")]
    FrameOutOfRange { index: usize, len: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn read(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Read {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Write {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Wraps the error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Name of the stage that failed, if known.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
