use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite action component {index}: {value}")]
    NonFiniteAction { index: usize, value: f64 },

    #[error("invalid domain config: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("input layout mismatch: expected {expected} values, got {got}")]
    LayoutMismatch { expected: usize, got: usize },

    #[error("stale graph: recorded at parameter version {recorded}, network is at {current}")]
    StaleGraph { recorded: u64, current: u64 },

    #[error("non-finite gradient in {0} entries, update skipped")]
    NonFiniteGradient(usize),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("base policy success rate {rate:.3} over {window} episodes is below the floor {floor:.3}")]
    SuccessFloor { rate: f64, window: usize, floor: f64 },

    #[error("pretraining did not reach success {target:.2} within {steps} env steps (best {best:.3})")]
    ThresholdNotReached { target: f64, steps: usize, best: f64 },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("refusing to overwrite existing output {} (pass --force)", .0.display())]
    OutputExists(PathBuf),

    #[error("bad format in {what}: {msg}")]
    Format { what: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn format(what: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format { what: what.into(), msg: msg.into() }
    }
}
