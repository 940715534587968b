use std::path::PathBuf;

use thiserror::Error;

use crate::domain::MetricKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while loading, scoring or reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty scanpath")]
    EmptyScanpath,

    #[error("empty aggregation")]
    EmptyAggregation,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("frame mismatch: {left} vs {right}")]
    FrameMismatch { left: String, right: String },

    #[error("invalid frame {width}x{height}")]
    InvalidFrame { width: u32, height: u32 },

    #[error("fixation steps must be strictly increasing (step {step} after {previous})")]
    UnorderedSteps { previous: u32, step: u32 },

    #[error("fixation ({x}, {y}) lies outside the {width}x{height} frame")]
    OutsideFrame { x: f64, y: f64, width: u32, height: u32 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no negatives: human fixations cover every map cell")]
    NoNegatives,

    #[error("degenerate calibration on {metric}: {reason}")]
    DegenerateCalibration { metric: MetricKind, reason: String },

    #[error("config fingerprint mismatch: calibration has {calibration}, evaluation uses {evaluation}")]
    FingerprintMismatch {
        calibration: String,
        evaluation: String,
    },

    #[error("no overlapping image ids between model and human scanpaths")]
    NoOverlap,

    #[error("evidence trace for {image_id} has {found} steps, expected {expected}")]
    TraceLength {
        image_id: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate row for image {image_id} step {step}")]
    DuplicateRow { image_id: String, step: u32 },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed or inconsistent input data, as
    /// opposed to calibration degeneracy or configuration drift.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::DegenerateCalibration { .. } | Error::FingerprintMismatch { .. }
        )
    }
}
